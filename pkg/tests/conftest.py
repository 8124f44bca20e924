"""Shared fixtures and independent oracles for the test suite.

The oracle helpers here re-derive quantities straight from plant matrices
(plain loops, matrix powers) so they stay independent of the package code
paths they are used to check.
"""

import numpy as np
import pytest

import hankelmpc as hm
from hankelmpc import trajectory as tj
from hankelmpc.boxes import Box


# --- independent oracles -------------------------------------------------------

def naive_simulate(A, B, C, D, x0, u):
    """Step-by-step state-space rollout, written independently of the package."""
    A, B, C, D = (np.asarray(M, dtype=float) for M in (A, B, C, D))
    x = np.asarray(x0, dtype=float).copy()
    ys = []
    for k in range(len(u)):
        ys.append(C @ x + D @ u[k])
        x = A @ x + B @ u[k]
    return np.array(ys)


def response_matrices(sys, T):
    """(O, G) with y_[0,T-1] = O x0 + G u_[0,T-1], from matrix powers."""
    n, m, p = sys.n, sys.m, sys.p
    O = np.zeros((T * p, n))
    G = np.zeros((T * p, T * m))
    Ak = np.eye(n)
    powers = [Ak]
    for _ in range(T):
        Ak = sys.A @ Ak
        powers.append(Ak)
    for i in range(T):
        O[i * p:(i + 1) * p] = sys.C @ powers[i]
        G[i * p:(i + 1) * p, i * m:(i + 1) * m] = sys.D
        for j in range(i):
            G[i * p:(i + 1) * p, j * m:(j + 1) * m] = sys.C @ powers[i - 1 - j] @ sys.B
    return O, G


def is_trajectory_statespace(sys, u_bar, y_bar, rtol=1e-8):
    """State-space membership oracle: fit an initial state by least squares."""
    u_bar = np.atleast_2d(u_bar)
    y_bar = np.atleast_2d(y_bar)
    T = u_bar.shape[0]
    O, G = response_matrices(sys, T)
    rhs = y_bar.ravel() - G @ u_bar.ravel()
    x0, *_ = np.linalg.lstsq(O, rhs, rcond=None)
    residual = np.linalg.norm(O @ x0 - rhs)
    return residual <= rtol * (1.0 + np.linalg.norm(y_bar))


def square_lag_system(rng, m, p, l, radius=0.8, tries=60):
    """Random plant with n = p*l and lag exactly l (square depth-l observability)."""
    n = p * l
    for _ in range(tries):
        sys = hm.random_system(rng, n, m, p, radius=radius)
        if hm.lag(sys) == l:
            return sys
    raise RuntimeError("could not draw a square-lag system")


def excited_record(sys, rng, N, x0=None, low=-1.0, high=1.0):
    u = tj.random_excitation(rng, N, sys.m, low=low, high=high)
    x0 = np.zeros(sys.n) if x0 is None else x0
    _, y = hm.simulate(sys, x0, u)
    return hm.IoTrajectory(u, y)


# --- fixtures --------------------------------------------------------------------

@pytest.fixture
def rng():
    return np.random.default_rng(0xDA7A)


@pytest.fixture
def scalar_sys():
    """a=0.5, b=1, c=1, d=0: the hand-checked scalar plant."""
    return hm.LtiSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]])


@pytest.fixture(scope="session")
def four_tank():
    return hm.four_tank_system()


@pytest.fixture(scope="session")
def four_tank_bank(four_tank):
    rng = np.random.default_rng(1)
    u = tj.random_excitation(rng, 100, 2)
    _, y = hm.simulate(four_tank, np.zeros(4), u)
    return hm.build_data_bank(hm.IoTrajectory(u, y), L=15, l=2)


@pytest.fixture(scope="session")
def four_tank_certificate(four_tank_bank):
    """Zero-controller certificate at the demo weights (reused; synthesis is
    the slowest step in the suite)."""
    Q, R = np.eye(2), 5e-3 * np.eye(2)
    return hm.synthesize(four_tank_bank, Q, R, zero_controller=True)


@pytest.fixture
def demo_boxes():
    return Box.symmetric(2.0, 2), Box.unbounded(2)
