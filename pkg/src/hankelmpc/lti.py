"""Ground-truth discrete-time LTI plants.

These objects generate data, simulate the closed loop, and act as an
independent oracle in tests.  Nothing on the controller side of the package
reads their matrices.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .linalg import numerical_rank, spectral_radius

# Scale-invariant residual tolerance for least-squares consistency checks.
RESIDUAL_RTOL = 1e-8


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    return m


@dataclass(frozen=True)
class LtiSystem:
    """Plant x+ = A x + B u, y = C x + D u.

    Construction rejects non-controllable or non-observable realizations:
    both are standing requirements for everything built on top.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape[0] != n:
            raise ValueError("B must have as many rows as A")
        if C.shape[1] != n:
            raise ValueError("C must have as many columns as A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("D must be p x m")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, mat)
        if numerical_rank(controllability_matrix(self)) < n:
            raise ValueError("(A, B) is not controllable")
        if numerical_rank(observability_matrix(self, n)) < n:
            raise ValueError("(A, C) is not observable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def step(self, x, u):
        """One-step update; returns (x_next, y)."""
        x = np.asarray(x, dtype=float).reshape(self.n)
        u = np.asarray(u, dtype=float).reshape(self.m)
        return self.A @ x + self.B @ u, self.C @ x + self.D @ u


@dataclass(frozen=True)
class ExtendedRealization:
    """Window-shift dynamics xi+ = A xi + B u, y = C xi + D u.

    The state xi stacks the last l inputs over the last l outputs.  A and B
    carry the fixed shift structure (identity sub-diagonals, a zero row for
    the incoming input, the feedthrough confined to the last p rows); the
    only learned content is the output-recursion row and the feedthrough.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    l: int
    m: int
    p: int

    @property
    def n_xi(self) -> int:
        return (self.m + self.p) * self.l

    def step(self, xi, u):
        xi = np.asarray(xi, dtype=float).reshape(self.n_xi)
        u = np.asarray(u, dtype=float).reshape(self.m)
        return self.A @ xi + self.B @ u, self.C @ xi + self.D @ u


def simulate(sys: LtiSystem, x0, u):
    """Roll the plant forward under the input sequence u (T x m).

    Returns (x, y) with x of shape (T+1, n) including the initial state and
    y of shape (T, p).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != sys.m:
        raise ValueError(f"input samples must have dimension {sys.m}")
    x0 = np.asarray(x0, dtype=float).reshape(sys.n)
    T = u.shape[0]
    x = np.empty((T + 1, sys.n))
    y = np.empty((T, sys.p))
    x[0] = x0
    for k in range(T):
        y[k] = sys.C @ x[k] + sys.D @ u[k]
        x[k + 1] = sys.A @ x[k] + sys.B @ u[k]
    return x, y


def observability_matrix(sys: LtiSystem, l: int) -> np.ndarray:
    """Stacked blocks C, CA, ..., CA^(l-1), shape (p*l) x n."""
    if l < 1:
        raise ValueError("window length must be at least 1")
    blocks = []
    block = sys.C
    for _ in range(l):
        blocks.append(block)
        block = block @ sys.A
    return np.vstack(blocks)


def controllability_matrix(sys: LtiSystem, horizon: int | None = None) -> np.ndarray:
    """[B, AB, ..., A^(h-1)B]; h defaults to n."""
    h = sys.n if horizon is None else horizon
    blocks = []
    block = sys.B
    for _ in range(h):
        blocks.append(block)
        block = sys.A @ block
    return np.hstack(blocks)


def lag(sys: LtiSystem) -> int:
    """Smallest l <= n for which the observability matrix has rank n."""
    for l in range(1, sys.n + 1):
        if numerical_rank(observability_matrix(sys, l)) == sys.n:
            return l
    raise ValueError("no window length up to n reaches rank n; observability violated")


def steady_state(sys: LtiSystem, u_s):
    """Equilibrium state and output for a constant input (x = A x + B u)."""
    u_s = np.asarray(u_s, dtype=float).reshape(sys.m)
    x_s = np.linalg.solve(np.eye(sys.n) - sys.A, sys.B @ u_s)
    return x_s, sys.C @ x_s + sys.D @ u_s


def is_equilibrium_model(sys: LtiSystem, u_s, y_s, rtol: float = RESIDUAL_RTOL) -> bool:
    """Whether (u_s, y_s) held constant is an equilibrium of the plant.

    Solves for a state x with x = A x + B u_s and y_s = C x + D u_s by least
    squares and accepts when the residual is negligible at the data's scale.
    """
    u_s = np.asarray(u_s, dtype=float).reshape(sys.m)
    y_s = np.asarray(y_s, dtype=float).reshape(sys.p)
    lhs = np.vstack([np.eye(sys.n) - sys.A, sys.C])
    rhs = np.concatenate([sys.B @ u_s, y_s - sys.D @ u_s])
    x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    residual = np.linalg.norm(lhs @ x - rhs)
    return residual <= rtol * (1.0 + np.linalg.norm(rhs))


def realization_from_recursion(recursion_row: np.ndarray, D: np.ndarray,
                               l: int, m: int, p: int) -> ExtendedRealization:
    """Assemble the window-shift realization from its output-recursion row.

    The recursion row is p x (m+p)l ordered as [G_l..G_1 | F_l..F_1]: the
    new output is recursion_row @ xi + D u.  Everything else is the fixed
    shift structure.
    """
    n_xi = (m + p) * l
    recursion_row = np.asarray(recursion_row, dtype=float).reshape(p, n_xi)
    D = np.asarray(D, dtype=float).reshape(p, m)

    A = np.zeros((n_xi, n_xi))
    for i in range(l - 1):  # input-window shift
        A[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
    for j in range(l - 1):  # output-window shift
        A[l * m + j * p:l * m + (j + 1) * p,
          l * m + (j + 1) * p:l * m + (j + 2) * p] = np.eye(p)
    A[l * m + (l - 1) * p:, :] = recursion_row

    B = np.zeros((n_xi, m))
    B[(l - 1) * m:l * m, :] = np.eye(m)
    B[l * m + (l - 1) * p:, :] = D

    return ExtendedRealization(A=A, B=B, C=recursion_row.copy(), D=D.copy(),
                               l=l, m=m, p=p)


def extended_realization(sys: LtiSystem, l: int, sim_length: int | None = None) -> ExtendedRealization:
    """Window-shift realization for window length l >= lag.

    The output-recursion row (the only unknown content of the shift
    structure) is recovered by least squares of y_k against the stacked
    input-output window over a simulated trajectory with a rich input; the
    feedthrough block is taken from the plant directly.
    """
    n, m, p = sys.n, sys.m, sys.p
    l_min = lag(sys)
    if l < l_min:
        raise ValueError(f"window length {l} is below the plant lag {l_min}")
    n_xi = (m + p) * l

    T = sim_length if sim_length is not None else 25 + 5 * (n_xi + m)
    rng = np.random.default_rng(0x51B1)  # fixed seed: the recovery is deterministic
    u = rng.uniform(-1.0, 1.0, (T, m))
    x0 = rng.uniform(-1.0, 1.0, n)
    _, y = simulate(sys, x0, u)

    # Regressor rows are xi_k = (u window, y window); targets are y_k - D u_k.
    rows = T - l
    regress = np.empty((rows, n_xi))
    target = np.empty((rows, p))
    for i, k in enumerate(range(l, T)):
        regress[i] = np.concatenate([u[k - l:k].ravel(), y[k - l:k].ravel()])
        target[i] = y[k] - sys.D @ u[k]

    reachable_dim = l * m + n  # dimension of the set of valid windows
    if numerical_rank(regress) < reachable_dim:
        raise ValueError("window data is rank deficient; recursion row recovery failed")
    coeff, *_ = np.linalg.lstsq(regress, target, rcond=None)
    fit_err = np.max(np.abs(regress @ coeff - target))
    if fit_err > RESIDUAL_RTOL * (1.0 + np.max(np.abs(y))):
        raise ValueError(f"window recursion is inconsistent (residual {fit_err:.2e})")
    recursion_row = coeff.T  # p x n_xi, blocks [G_l..G_1 | F_l..F_1]

    return realization_from_recursion(recursion_row, sys.D, l, m, p)


def extended_pair_controllable(sys: LtiSystem, l: int) -> bool:
    """Whether the window-shift pair is controllable: true iff p*l == n.

    Requires l >= lag.  `extended_controllability_rank` is the direct check
    against which this criterion is cross-validated in tests.
    """
    if l < lag(sys):
        raise ValueError("window length below plant lag")
    return sys.p * l == sys.n


def extended_controllability_rank(sys: LtiSystem, l: int) -> int:
    """Rank of the controllability matrix of the window-shift realization."""
    real = extended_realization(sys, l)
    blocks = []
    block = real.B
    for _ in range(real.n_xi):
        blocks.append(block)
        block = real.A @ block
    return numerical_rank(np.hstack(blocks))


def random_system(rng: np.random.Generator, n: int, m: int, p: int,
                  radius: float = 0.9, feedthrough: bool = False,
                  max_tries: int = 50) -> LtiSystem:
    """Random controllable/observable plant with prescribed spectral radius.

    Entries are i.i.d. uniform on [-1, 1]; A is rescaled so its spectral
    radius equals `radius` (default stable).
    """
    for _ in range(max_tries):
        A = rng.uniform(-1.0, 1.0, (n, n))
        rho = spectral_radius(A)
        if rho == 0.0:
            continue
        A *= radius / rho
        B = rng.uniform(-1.0, 1.0, (n, m))
        C = rng.uniform(-1.0, 1.0, (p, n))
        D = rng.uniform(-1.0, 1.0, (p, m)) if feedthrough else np.zeros((p, m))
        try:
            return LtiSystem(A, B, C, D)
        except ValueError:
            continue
    raise RuntimeError("failed to draw a controllable/observable system")


# Setpoint used by the bundled demo plant; the sensor gains below are
# calibrated so this input-output pair is an exact equilibrium.
FOUR_TANK_SETPOINT = (np.array([1.0, 1.0]), np.array([0.65, 0.77]))


def four_tank_system(sample_time: float = 5.0) -> LtiSystem:
    """Implementer-chosen linearized four-tank plant (n=4, m=2, p=2).

    Classic quadruple-tank structure: two pumps each split their flow
    between a lower tank and the diagonally opposite upper tank, and the
    upper tanks drain into the lower ones.  Time constants and flow splits
    are fixed here; the plant is zero-order-hold discretized and the two
    level-sensor gains are calibrated so that constant input (1, 1) yields
    output (0.65, 0.77) exactly.  Open-loop stable, lag 2, and the depth-2
    observability matrix is square (p*l = n).
    """
    t1, t2, t3, t4 = 63.0, 91.0, 39.0, 56.0
    split1, split2 = 0.30, 0.40
    pump1, pump2 = 0.085, 0.095
    Ac = np.array([
        [-1.0 / t1, 0.0, 1.0 / t3, 0.0],
        [0.0, -1.0 / t2, 0.0, 1.0 / t4],
        [0.0, 0.0, -1.0 / t3, 0.0],
        [0.0, 0.0, 0.0, -1.0 / t4],
    ])
    Bc = np.array([
        [split1 * pump1, 0.0],
        [0.0, split2 * pump2],
        [0.0, (1.0 - split2) * pump2],
        [(1.0 - split1) * pump1, 0.0],
    ])
    # Zero-order hold via the block-matrix exponential.
    blk = np.zeros((6, 6))
    blk[:4, :4] = Ac * sample_time
    blk[:4, 4:] = Bc * sample_time
    eblk = expm(blk)
    Ad, Bd = eblk[:4, :4], eblk[:4, 4:]

    u_s, y_s = FOUR_TANK_SETPOINT
    levels = np.linalg.solve(np.eye(4) - Ad, Bd @ u_s)
    C = np.zeros((2, 4))
    C[0, 0] = y_s[0] / levels[0]
    C[1, 1] = y_s[1] / levels[1]
    return LtiSystem(Ad, Bd, C, np.zeros((2, 2)))
