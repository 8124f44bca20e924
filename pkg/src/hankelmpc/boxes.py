"""Per-coordinate interval constraints with +-inf for unconstrained entries."""

from typing import NamedTuple

import numpy as np


class Box(NamedTuple):
    """Axis-aligned box {x : lower <= x <= upper}, entrywise, +-inf allowed."""

    lower: np.ndarray
    upper: np.ndarray

    @staticmethod
    def make(lower, upper) -> "Box":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds must have equal length")
        if np.any(lo >= hi):
            raise ValueError("each lower bound must be strictly below its upper bound")
        return Box(lo, hi)

    @staticmethod
    def symmetric(bound: float, dim: int) -> "Box":
        return Box.make(-bound * np.ones(dim), bound * np.ones(dim))

    @staticmethod
    def unbounded(dim: int) -> "Box":
        return Box.make(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @property
    def is_unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lower)) and np.all(np.isposinf(self.upper)))

    def violation(self, x) -> float:
        """Largest constraint violation of x (0 when x is inside the box)."""
        x = np.asarray(x, dtype=float)
        over = x - self.upper
        under = self.lower - x
        worst = 0.0
        for gap in (over, under):
            finite = gap[np.isfinite(gap)]
            if finite.size:
                worst = max(worst, float(np.max(finite)))
        return max(worst, 0.0)

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.violation(x) <= tol

    def margin(self, x) -> float:
        """Distance from x to the nearest face (negative when outside)."""
        x = np.asarray(x, dtype=float)
        gaps = np.concatenate([self.upper - x, x - self.lower])
        gaps = gaps[np.isfinite(gaps)]
        return float(np.min(gaps)) if gaps.size else np.inf

    def repeated(self, copies: int) -> "Box":
        """Box for `copies` stacked samples of the same coordinate bounds."""
        return Box(np.tile(self.lower, copies), np.tile(self.upper, copies))
