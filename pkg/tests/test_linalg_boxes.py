"""Rank rule, symmetric-matrix helpers, and box utilities."""

import math

import numpy as np
import pytest

from hankelmpc.boxes import Box
from hankelmpc.linalg import (eigmax_sym, eigmin_sym, inv_pd, numerical_rank,
                              spectral_radius, sqrtm_psd, symmetrize)


class TestNumericalRank:
    def test_exact_rank(self, rng):
        a = rng.standard_normal((6, 3))
        assert numerical_rank(a @ a.T) == 3

    def test_cutoff_scales_with_largest_singular_value(self):
        # cutoff = s_max * max(shape) * eps * 100 ~ 4.4e-14 here
        assert numerical_rank(np.diag([1.0, 1e-10])) == 2
        assert numerical_rank(np.diag([1.0, 1e-15])) == 1

    def test_zero_and_empty(self):
        assert numerical_rank(np.zeros((3, 3))) == 0
        assert numerical_rank(np.zeros((0, 4))) == 0


class TestSymmetricHelpers:
    def test_sqrtm_roundtrip(self, rng):
        g = rng.standard_normal((5, 5))
        mat = g @ g.T + np.eye(5)
        root = sqrtm_psd(mat)
        assert np.allclose(root @ root, mat, atol=1e-10)
        assert np.array_equal(root, root.T)

    def test_inv_pd_roundtrip(self, rng):
        g = rng.standard_normal((4, 4))
        mat = g @ g.T + np.eye(4)
        assert np.allclose(inv_pd(mat) @ mat, np.eye(4), atol=1e-10)

    def test_inv_pd_rejects_indefinite(self):
        with pytest.raises(np.linalg.LinAlgError, match="positive definite"):
            inv_pd(np.diag([1.0, -1.0]))

    def test_inv_pd_rejects_ill_conditioned(self):
        with pytest.raises(np.linalg.LinAlgError, match="condition number"):
            inv_pd(np.diag([1.0, 1e-12]))

    def test_eig_extremes(self):
        mat = np.diag([3.0, -2.0, 0.5])
        assert eigmax_sym(mat) == pytest.approx(3.0)
        assert eigmin_sym(mat) == pytest.approx(-2.0)

    def test_symmetrize(self, rng):
        a = rng.standard_normal((3, 3))
        s = symmetrize(a)
        assert np.array_equal(s, s.T)

    def test_spectral_radius(self):
        assert spectral_radius(np.diag([0.3, -0.8])) == pytest.approx(0.8)


class TestBox:
    def test_violation_inside_and_outside(self):
        box = Box.make([-1.0, -np.inf], [1.0, 2.0])
        assert box.violation([0.0, 1.0]) == 0.0
        assert box.violation([1.5, 0.0]) == pytest.approx(0.5)
        assert box.violation([0.0, 3.0]) == pytest.approx(1.0)
        assert box.violation([-100.0, 0.0]) == pytest.approx(99.0)

    def test_margin(self):
        box = Box.symmetric(2.0, 2)
        assert box.margin([1.0, 0.0]) == pytest.approx(1.0)
        assert box.margin([3.0, 0.0]) == pytest.approx(-1.0)
        assert Box.unbounded(2).margin([5.0, -7.0]) == math.inf

    def test_repeated_tiles_bounds(self):
        box = Box.make([-1.0], [2.0])
        rep = box.repeated(3)
        assert np.array_equal(rep.lower, [-1.0, -1.0, -1.0])
        assert np.array_equal(rep.upper, [2.0, 2.0, 2.0])

    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError, match="strictly below"):
            Box.make([1.0], [1.0])

    def test_boundedness_flags(self):
        assert Box.symmetric(1.0, 2).is_bounded
        assert Box.unbounded(2).is_unbounded
        half = Box.make([-1.0], [np.inf])
        assert not half.is_bounded and not half.is_unbounded
