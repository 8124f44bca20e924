"""Everything built from one measured input-output record.

Hankel matrices, persistent-excitation tests, span-membership of candidate
trajectories, stacked input-output windows, and the data matrices that feed
the terminal-ingredient synthesis.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .linalg import numerical_rank

# Residual tolerance for span membership, scaled by (1 + trajectory norm).
MEMBERSHIP_RTOL = 1e-8


class HankelMatrix(NamedTuple):
    """Depth-L block Hankel matrix; column j is the window x_[j, j+L-1]."""

    matrix: np.ndarray  # (block * depth) x (N - depth + 1)
    depth: int
    block: int  # dimension of one sample


class TrajectoryFit(NamedTuple):
    """Least-squares span fit of a candidate window; alpha is None if rejected."""

    alpha: Optional[np.ndarray]
    residual: float

    @property
    def feasible(self) -> bool:
        return self.alpha is not None


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("sequence must be (N,) or (N, q)")
    return x


def hankel(x, depth: int) -> HankelMatrix:
    """Hankel matrix of the sample sequence x (N x q) with the given depth."""
    x = _as_samples(x)
    N, q = x.shape
    if not 1 <= depth <= N:
        raise ValueError(f"depth must be in [1, {N}], got {depth}")
    cols = N - depth + 1
    H = np.empty((q * depth, cols))
    for j in range(cols):
        H[:, j] = x[j:j + depth].ravel()
    return HankelMatrix(H, depth, q)


def is_persistently_exciting(u, order: int) -> bool:
    """Rank test: the depth-`order` Hankel matrix of u has full row rank."""
    u = _as_samples(u)
    if order < 1:
        raise ValueError("order must be positive")
    if u.shape[0] < order:
        return False
    H = hankel(u, order).matrix
    return numerical_rank(H) == u.shape[1] * order


def minimum_pe_length(m: int, order: int) -> int:
    """Shortest data length for which PE of the given order is possible."""
    return (m + 1) * order - 1


@dataclass(frozen=True)
class IoTrajectory:
    """Paired input (N x m) and output (N x p) record over discrete time."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = _as_samples(self.u)
        y = _as_samples(self.y)
        if u.shape[0] != y.shape[0]:
            raise ValueError("input and output records must have equal length")
        if u.shape[0] < 1:
            raise ValueError("record must contain at least one sample")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]


# --- stacked input-output windows -------------------------------------------
#
# The ordering of a window vector is fixed here and nowhere else: the input
# window (oldest sample first) stacked over the output window (oldest first).

def stack_window(u_win, y_win) -> np.ndarray:
    u_win = _as_samples(u_win)
    y_win = _as_samples(y_win)
    if u_win.shape[0] != y_win.shape[0]:
        raise ValueError("input and output windows must have equal length")
    return np.concatenate([u_win.ravel(), y_win.ravel()])


def split_window(xi, l: int, m: int, p: int):
    """Inverse of stack_window; returns (u_win, y_win) as (l, m) and (l, p)."""
    xi = np.asarray(xi, dtype=float).reshape((m + p) * l)
    return xi[:l * m].reshape(l, m), xi[l * m:].reshape(l, p)


def extended_state_from_history(u_win, y_win, l: int) -> np.ndarray:
    """Window vector from exactly the last l input and output samples."""
    u_win = _as_samples(u_win)
    y_win = _as_samples(y_win)
    if u_win.shape[0] != l or y_win.shape[0] != l:
        raise ValueError(f"history windows must have exactly {l} samples")
    return stack_window(u_win, y_win)


def steady_extended_state(u_s, y_s, l: int) -> np.ndarray:
    """Window vector of a constant input-output pair (l copies of each)."""
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float))
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    return stack_window(np.tile(u_s, (l, 1)), np.tile(y_s, (l, 1)))


def output_selector(l: int, m: int, p: int) -> np.ndarray:
    """Selector T with T xi = most recent output sample (last p coordinates)."""
    n_xi = (m + p) * l
    T = np.zeros((p, n_xi))
    T[:, n_xi - p:] = np.eye(p)
    return T


# --- data bank ----------------------------------------------------------------

@dataclass(frozen=True)
class DataBank:
    """Offline data matrices built once from a single record.

    Hu/Hy are depth-(L+l) Hankel matrices used for prediction; Xi, Xi_plus,
    U, Z collect the window states xi_l..xi_{N-1}, their successors, the
    matching inputs, and the stacked regressor [Xi; U] used by the synthesis.
    """

    traj: IoTrajectory
    L: int
    l: int
    Hu: HankelMatrix
    Hy: HankelMatrix
    Xi: np.ndarray
    Xi_plus: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    pe_order: Optional[int] = None
    pe_ok: Optional[bool] = None

    @property
    def N(self) -> int:
        return self.traj.N

    @property
    def m(self) -> int:
        return self.traj.m

    @property
    def p(self) -> int:
        return self.traj.p

    @property
    def n_xi(self) -> int:
        return (self.m + self.p) * self.l


def build_data_bank(traj: IoTrajectory, L: int, l: int,
                    state_dim_bound: Optional[int] = None) -> DataBank:
    """Assemble the data bank for horizon L and window length l.

    When a bound on the state dimension is supplied, the input is checked
    for persistent excitation of order L + l + bound; a failure is surfaced
    as a warning (and recorded on the bank), not as an error, since the
    bank itself stays well defined.
    """
    if L < 1 or l < 1:
        raise ValueError("horizon and window length must be positive")
    if traj.N < L + l:
        raise ValueError(f"record length {traj.N} is below depth L+l = {L + l}")
    if traj.N < l + 1:
        raise ValueError("record too short to form a single window transition")

    Hu = hankel(traj.u, L + l)
    Hy = hankel(traj.y, L + l)

    wins_u = hankel(traj.u, l).matrix  # columns: u windows ending at k-1, k = l..N
    wins_y = hankel(traj.y, l).matrix
    Xi = np.vstack([wins_u[:, :-1], wins_y[:, :-1]])
    Xi_plus = np.vstack([wins_u[:, 1:], wins_y[:, 1:]])
    U = traj.u[l:].T
    Z = np.vstack([Xi, U])

    pe_order = pe_ok = None
    if state_dim_bound is not None:
        pe_order = L + l + state_dim_bound
        pe_ok = is_persistently_exciting(traj.u, pe_order)
        if not pe_ok:
            warnings.warn(
                f"input is not persistently exciting of order {pe_order}; "
                "span predictions may not cover all system trajectories",
                stacklevel=2)

    return DataBank(traj=traj, L=L, l=l, Hu=Hu, Hy=Hy, Xi=Xi, Xi_plus=Xi_plus,
                    U=U, Z=Z, pe_order=pe_order, pe_ok=pe_ok)


def z_full_row_rank(bank: DataBank) -> bool:
    """Whether the stacked regressor Z = [Xi; U] has full row rank."""
    return numerical_rank(bank.Z) == bank.n_xi + bank.m


def span_fit(traj: IoTrajectory, u_bar, y_bar,
             rtol: float = MEMBERSHIP_RTOL) -> TrajectoryFit:
    """Minimum-norm coefficients reproducing (u_bar, y_bar) from the record.

    Solves the stacked Hankel system by least squares; the candidate is
    accepted as a trajectory of the data-generating system when the
    residual is negligible at the candidate's scale.
    """
    u_bar = _as_samples(u_bar)
    y_bar = _as_samples(y_bar)
    if u_bar.shape[0] != y_bar.shape[0]:
        raise ValueError("candidate input and output must have equal length")
    depth = u_bar.shape[0]
    H = np.vstack([hankel(traj.u, depth).matrix, hankel(traj.y, depth).matrix])
    b = np.concatenate([u_bar.ravel(), y_bar.ravel()])
    alpha, *_ = np.linalg.lstsq(H, b, rcond=None)
    residual = float(np.linalg.norm(H @ alpha - b))
    if residual > rtol * (1.0 + np.linalg.norm(b)):
        return TrajectoryFit(None, residual)
    return TrajectoryFit(alpha, residual)


def trajectory_coefficients(bank: DataBank, u_bar, y_bar,
                            rtol: float = MEMBERSHIP_RTOL) -> TrajectoryFit:
    """Span membership of a depth-(L+l) candidate against the bank's Hankels."""
    u_bar = _as_samples(u_bar)
    y_bar = _as_samples(y_bar)
    depth = bank.L + bank.l
    if u_bar.shape[0] != depth or y_bar.shape[0] != depth:
        raise ValueError(f"candidate must have exactly {depth} samples")
    H = np.vstack([bank.Hu.matrix, bank.Hy.matrix])
    b = np.concatenate([u_bar.ravel(), y_bar.ravel()])
    alpha, *_ = np.linalg.lstsq(H, b, rcond=None)
    residual = float(np.linalg.norm(H @ alpha - b))
    if residual > rtol * (1.0 + np.linalg.norm(b)):
        return TrajectoryFit(None, residual)
    return TrajectoryFit(alpha, residual)


def is_equilibrium_data(bank: DataBank, u_s, y_s,
                        rtol: float = MEMBERSHIP_RTOL) -> bool:
    """Data-driven equilibrium test: the constant window of length l+1 must
    lie in the span of the record."""
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float))
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    reps = bank.l + 1
    fit = span_fit(bank.traj, np.tile(u_s, (reps, 1)), np.tile(y_s, (reps, 1)),
                   rtol=rtol)
    return fit.feasible


def random_excitation(rng: np.random.Generator, N: int, m: int,
                      low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """I.i.d. uniform input samples, the default excitation for data records."""
    return rng.uniform(low, high, (N, m))
