"""Hankel matrices, excitation tests, span membership, windows, data banks."""

import numpy as np
import pytest

import hankelmpc as hm
from hankelmpc import trajectory as tj

from conftest import excited_record, is_trajectory_statespace, square_lag_system


class TestHankel:
    def test_scalar_literal(self):
        H = tj.hankel([1.0, 2.0, 3.0, 4.0], 2)
        assert np.array_equal(H.matrix, [[1, 2, 3], [2, 3, 4]])
        assert H.depth == 2 and H.block == 1

    def test_full_depth_single_column(self):
        H = tj.hankel([[1.0, 2.0], [3.0, 4.0]], 2)
        assert H.matrix.shape == (4, 1)
        assert np.array_equal(H.matrix.ravel(), [1, 2, 3, 4])

    def test_columns_are_windows(self, rng):
        x = rng.uniform(-1, 1, (30, 3))
        H = tj.hankel(x, 7)
        for j in range(H.matrix.shape[1]):
            assert np.array_equal(H.matrix[:, j], x[j:j + 7].ravel())

    def test_depth_out_of_range(self, rng):
        with pytest.raises(ValueError):
            tj.hankel(rng.uniform(size=(4, 1)), 5)


class TestPersistentExcitation:
    def test_constant_not_exciting(self):
        assert not tj.is_persistently_exciting([1.0, 1.0, 1.0, 1.0], 2)

    def test_alternating_exciting(self):
        assert tj.is_persistently_exciting([1.0, 0.0, 1.0, 0.0], 2)

    def test_uniform_data_high_order(self, rng):
        u = tj.random_excitation(rng, 100, 2)
        assert tj.is_persistently_exciting(u, 15 + 2 + 4)

    def test_monotone_in_order(self, rng):
        u = tj.random_excitation(rng, 40, 1)
        orders = [o for o in range(1, 20)]
        flags = [tj.is_persistently_exciting(u, o) for o in orders]
        for earlier, later in zip(flags, flags[1:]):
            assert earlier or not later  # ok at L implies ok at L-1

    def test_minimum_length_rule(self):
        assert tj.minimum_pe_length(2, 21) == 62


class TestWindows:
    def test_stack_literal(self):
        xi = tj.extended_state_from_history([[2.0]], [[3.0]], l=1)
        assert np.array_equal(xi, [2.0, 3.0])

    def test_selector_returns_last_output(self, rng):
        l, m, p = 3, 2, 2
        u_win = rng.uniform(-1, 1, (l, m))
        y_win = rng.uniform(-1, 1, (l, p))
        xi = tj.extended_state_from_history(u_win, y_win, l)
        T_y = tj.output_selector(l, m, p)
        assert np.array_equal(T_y @ xi, y_win[-1])

    def test_split_roundtrip(self, rng):
        l, m, p = 2, 3, 1
        u_win = rng.uniform(-1, 1, (l, m))
        y_win = rng.uniform(-1, 1, (l, p))
        xi = tj.stack_window(u_win, y_win)
        u_back, y_back = tj.split_window(xi, l, m, p)
        assert np.array_equal(u_back, u_win) and np.array_equal(y_back, y_win)

    def test_wrong_window_length(self, rng):
        with pytest.raises(ValueError):
            tj.extended_state_from_history(rng.uniform(size=(2, 1)),
                                           rng.uniform(size=(2, 1)), l=3)

    def test_steady_window_ordering(self):
        xi = tj.steady_extended_state([1.0, 1.0], [0.65, 0.77], 2)
        assert np.array_equal(xi, [1, 1, 1, 1, 0.65, 0.77, 0.65, 0.77])

    def test_steady_zero(self):
        assert np.all(tj.steady_extended_state(np.zeros(2), np.zeros(3), 2) == 0)

    def test_steady_window_is_fixed_point(self, rng):
        sys = hm.random_system(rng, 4, 2, 2)
        l = hm.lag(sys)
        real = hm.extended_realization(sys, l)
        u_s = rng.uniform(-1, 1, 2)
        _, y_s = hm.steady_state(sys, u_s)
        xi_s = tj.steady_extended_state(u_s, y_s, l)
        xi_next, y_out = real.step(xi_s, u_s)
        assert np.allclose(xi_next, xi_s, atol=1e-9)
        assert np.allclose(y_out, y_s, atol=1e-9)


class TestDataBank:
    def test_minimal_record_single_column(self, rng):
        sys = hm.random_system(rng, 2, 1, 1)
        traj = excited_record(sys, rng, N=7)
        bank = hm.build_data_bank(traj, L=5, l=2)
        assert bank.Hu.matrix.shape[1] == 1
        assert bank.Hy.matrix.shape[1] == 1

    def test_shift_consistency(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=40)
        bank = hm.build_data_bank(traj, L=6, l=2)
        for j in range(bank.Xi.shape[1] - 1):
            assert np.array_equal(bank.Xi_plus[:, j], bank.Xi[:, j + 1])

    def test_columns_match_direct_slicing(self, rng):
        sys = hm.random_system(rng, 3, 1, 2)
        traj = excited_record(sys, rng, N=30)
        l = 2
        bank = hm.build_data_bank(traj, L=4, l=l)
        for idx, k in enumerate(range(l, traj.N)):
            xi_k = tj.stack_window(traj.u[k - l:k], traj.y[k - l:k])
            assert np.array_equal(bank.Xi[:, idx], xi_k)
            assert np.array_equal(bank.U[:, idx], traj.u[k])
        assert np.array_equal(bank.Z, np.vstack([bank.Xi, bank.U]))

    def test_demo_shapes(self, four_tank_bank):
        assert four_tank_bank.Hu.matrix.shape == (34, 84)
        assert four_tank_bank.Z.shape == (10, 98)

    def test_short_record_rejected(self, rng):
        sys = hm.random_system(rng, 2, 1, 1)
        traj = excited_record(sys, rng, N=6)
        with pytest.raises(ValueError):
            hm.build_data_bank(traj, L=6, l=2)

    def test_pe_warning_surfaces(self, rng):
        sys = hm.random_system(rng, 2, 1, 1)
        u = np.ones((20, 1))
        _, y = hm.simulate(sys, np.zeros(2), u)
        with pytest.warns(UserWarning, match="persistently exciting"):
            bank = hm.build_data_bank(hm.IoTrajectory(u, y), L=3, l=2,
                                      state_dim_bound=2)
        assert bank.pe_ok is False

    def test_deterministic_build(self, rng):
        sys = hm.random_system(rng, 3, 2, 1)
        traj = excited_record(sys, rng, N=40)
        a = hm.build_data_bank(traj, L=5, l=2)
        b = hm.build_data_bank(traj, L=5, l=2)
        for field in ("Xi", "Xi_plus", "U", "Z"):
            assert np.array_equal(getattr(a, field), getattr(b, field))
        assert np.array_equal(a.Hu.matrix, b.Hu.matrix)


class TestZRank:
    def test_rich_square_case(self, rng):
        sys = square_lag_system(rng, m=2, p=2, l=2)
        traj = excited_record(sys, rng, N=120)
        bank = hm.build_data_bank(traj, L=8, l=2)
        assert hm.z_full_row_rank(bank)

    def test_constant_input_fails(self, rng):
        sys = hm.random_system(rng, 2, 1, 1)
        u = 0.7 * np.ones((30, 1))
        _, y = hm.simulate(sys, np.ones(2), u)
        bank = hm.build_data_bank(hm.IoTrajectory(u, y), L=4, l=2)
        assert not hm.z_full_row_rank(bank)

    def test_oversized_window_fails_even_rich(self, rng):
        sys = hm.random_system(rng, 2, 1, 2)  # lag 1, so l=2 gives p*l > n
        traj = excited_record(sys, rng, N=120)
        bank = hm.build_data_bank(traj, L=6, l=2)
        assert not hm.z_full_row_rank(bank)


class TestSpanMembership:
    def test_record_slice_is_member(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=80)
        bank = hm.build_data_bank(traj, L=6, l=2)
        depth = 8
        fit = hm.trajectory_coefficients(bank, traj.u[3:3 + depth], traj.y[3:3 + depth])
        assert fit.feasible and fit.residual < 1e-10

    def test_fresh_trajectory_is_member(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=100)
        bank = hm.build_data_bank(traj, L=6, l=2)
        u_new = tj.random_excitation(rng, 8, 2)
        _, y_new = hm.simulate(sys, rng.uniform(-1, 1, 3), u_new)
        fit = hm.trajectory_coefficients(bank, u_new, y_new)
        assert fit.feasible

    def test_perturbed_output_rejected(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=100)
        bank = hm.build_data_bank(traj, L=6, l=2)
        u_new = tj.random_excitation(rng, 8, 2)
        _, y_new = hm.simulate(sys, rng.uniform(-1, 1, 3), u_new)
        y_new[4, 0] += 0.1
        fit = hm.trajectory_coefficients(bank, u_new, y_new)
        assert not fit.feasible

    def test_wrong_length_rejected(self, rng):
        sys = hm.random_system(rng, 2, 1, 1)
        traj = excited_record(sys, rng, N=40)
        bank = hm.build_data_bank(traj, L=4, l=2)
        with pytest.raises(ValueError):
            hm.trajectory_coefficients(bank, traj.u[:5], traj.y[:5])

    def test_span_roundtrip_random_coefficients(self, rng):
        # any combination of record windows must be a plant trajectory
        sys = hm.random_system(rng, 3, 1, 2)
        traj = excited_record(sys, rng, N=80)
        bank = hm.build_data_bank(traj, L=6, l=2)
        H = np.vstack([bank.Hu.matrix, bank.Hy.matrix])
        depth = bank.L + bank.l
        for _ in range(5):
            alpha = rng.standard_normal(H.shape[1])
            combo = H @ alpha
            u_bar = combo[:depth * traj.m].reshape(depth, traj.m)
            y_bar = combo[depth * traj.m:].reshape(depth, traj.p)
            assert is_trajectory_statespace(sys, u_bar, y_bar)

    def test_simulated_window_in_span(self, rng):
        # converse direction: simulated windows lie in the record's span
        sys = hm.random_system(rng, 3, 1, 2)
        traj = excited_record(sys, rng, N=80)
        bank = hm.build_data_bank(traj, L=6, l=2)
        for _ in range(5):
            u_new = tj.random_excitation(rng, 8, 1)
            _, y_new = hm.simulate(sys, rng.uniform(-1, 1, 3), u_new)
            fit = hm.trajectory_coefficients(bank, u_new, y_new)
            assert fit.feasible and fit.residual <= 1e-8 * (
                1 + np.linalg.norm(np.concatenate([u_new.ravel(), y_new.ravel()])))


class TestEquilibriumData:
    def test_origin(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=80)
        bank = hm.build_data_bank(traj, L=6, l=2)
        assert hm.is_equilibrium_data(bank, np.zeros(2), np.zeros(2))

    def test_agreement_with_model_oracle(self, rng):
        sys = hm.random_system(rng, 3, 2, 2)
        traj = excited_record(sys, rng, N=120)
        bank = hm.build_data_bank(traj, L=6, l=hm.lag(sys))
        agree = 0
        for _ in range(50):
            u_c = rng.uniform(-1, 1, 2)
            if rng.uniform() < 0.5:
                _, y_c = hm.steady_state(sys, u_c)  # true equilibrium
            else:
                y_c = rng.uniform(-1, 1, 2)  # almost surely not
            agree += (hm.is_equilibrium_data(bank, u_c, y_c)
                      == hm.is_equilibrium_model(sys, u_c, y_c))
        assert agree == 50

    def test_demo_setpoint(self, four_tank_bank):
        u_s, y_s = hm.FOUR_TANK_SETPOINT
        assert hm.is_equilibrium_data(four_tank_bank, u_s, y_s)
