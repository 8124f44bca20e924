"""Data-driven synthesis of the terminal cost, controller, and invariant set.

The route: split the window-shift dynamics into a known shift structure plus
an uncertainty channel carrying the output recursion, bound every recursion
consistent with the recorded data by a quadratic multiplier, and solve a
semidefinite feasibility program whose solution yields the terminal cost P,
terminal controller K, and a performance level gamma.  A sublevel set of
the P-norm inscribed in the constraint box serves as the terminal set.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import cvxpy as cp
import numpy as np

from . import solvers
from .boxes import Box
from .linalg import eigmin_sym, eigmax_sym, inv_pd, sqrtm_psd, symmetrize
from .lti import ExtendedRealization, realization_from_recursion
from .solvers import SolverFailure
from .trajectory import (DataBank, output_selector, steady_extended_state,
                         z_full_row_rank)

# Required decrease-condition slack on the closed-loop cost matrix.
DECREASE_TOL = 1e-7
# Slack allowed on invariance / box membership of terminal-set samples.
GEOMETRY_TOL = 1e-9
# Margin realizing strict definiteness in the feasibility program.
LMI_MARGIN = 1e-7
PD_WITNESS = 1e-9


class SynthesisInfeasible(RuntimeError):
    """The terminal-ingredient program has no admissible solution.

    `reason` states which gate failed: data rank, the LMI itself, or the
    recovery of a positive-definite terminal cost.
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class KnownPart:
    """Known content of the window-shift dynamics.

    A_prime is the shift structure with the output-recursion row zeroed,
    B_prime the input injection with the feedthrough zeroed, and B_w the
    channel (zeros over identity) through which the unknown recursion acts.
    """

    A_prime: np.ndarray
    B_prime: np.ndarray
    B_w: np.ndarray
    l: int
    m: int
    p: int

    @property
    def n_xi(self) -> int:
        return (self.m + self.p) * self.l


@dataclass(frozen=True)
class UncertaintyMultiplier:
    """Quadratic bound satisfied by every recursion consistent with the data.

    [Delta^T; I]^T P_dw [Delta^T; I] >= 0 for all consistent Delta; the
    noise-energy bound d_bar relaxes the lower-right block.  P_dw_bar is the
    congruence-transformed form entering the synthesis program.
    """

    P_dw: np.ndarray
    P_dw_bar: np.ndarray
    d_bar: float
    B_w: np.ndarray


@dataclass(frozen=True)
class VerificationReport:
    """Numerical check of the three terminal-ingredient conditions."""

    decrease_lmax: float
    decrease_ok: bool
    invariance_slack: float
    invariance_ok: bool
    window_violation: float
    input_violation: float
    output_violation: float
    admissibility_ok: bool
    beta: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.decrease_ok and self.invariance_ok and self.admissibility_ok

    def as_dict(self) -> dict:
        return {
            "decrease_lmax": self.decrease_lmax,
            "decrease_ok": self.decrease_ok,
            "invariance_slack": self.invariance_slack,
            "invariance_ok": self.invariance_ok,
            "window_violation": self.window_violation,
            "input_violation": self.input_violation,
            "output_violation": self.output_violation,
            "admissibility_ok": self.admissibility_ok,
            "beta": self.beta,
            "samples": self.samples,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class TerminalIngredients:
    """Terminal cost P, controller K, set radius beta, and audit data.

    beta = inf means the terminal set places no restriction (cost-only use).
    X is the raw program variable kept for auditing; report carries solver
    and bisection metadata plus the data-side decrease check.
    """

    P: np.ndarray
    K: np.ndarray
    gamma: float
    X: np.ndarray
    d_bar: float
    beta: float = math.inf
    report: dict = field(default_factory=dict)

    def with_radius(self, beta: float) -> "TerminalIngredients":
        if not beta > 0:
            raise ValueError("terminal set radius must be positive")
        return replace(self, beta=float(beta))


def known_part(l: int, m: int, p: int) -> KnownPart:
    """Known shift structure of the window dynamics for given dimensions."""
    if min(l, m, p) < 1:
        raise ValueError("l, m, p must all be at least 1")
    n_xi = (m + p) * l
    A_prime = np.zeros((n_xi, n_xi))
    for i in range(l - 1):
        A_prime[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
    for j in range(l - 1):
        A_prime[l * m + j * p:l * m + (j + 1) * p,
                l * m + (j + 1) * p:l * m + (j + 2) * p] = np.eye(p)
    B_prime = np.zeros((n_xi, m))
    B_prime[(l - 1) * m:l * m, :] = np.eye(m)
    B_w = np.zeros((n_xi, p))
    B_w[n_xi - p:, :] = np.eye(p)
    return KnownPart(A_prime=A_prime, B_prime=B_prime, B_w=B_w, l=l, m=m, p=p)


def uncertainty_multiplier(bank: DataBank, d_bar: float = 0.0) -> UncertaintyMultiplier:
    """Data-built multiplier bounding every recursion consistent with the bank.

    d_bar = 0 is the noise-free form; d_bar > 0 admits offline data whose
    total equation-error energy does not exceed d_bar.
    """
    if d_bar < 0:
        raise ValueError("noise-energy bound must be nonnegative")
    kp = known_part(bank.l, bank.m, bank.p)
    if not z_full_row_rank(bank):
        warnings.warn("regressor Z lacks full row rank; the synthesis program "
                      "will be infeasible", stacklevel=2)
    Z = bank.Z
    successors = kp.B_w.T @ bank.Xi_plus  # newest output block of each successor
    top_left = -(Z @ Z.T)
    top_right = Z @ successors.T
    bottom_right = d_bar * np.eye(bank.p) - successors @ successors.T
    P_dw = np.block([[top_left, top_right],
                     [top_right.T, bottom_right]])
    P_dw = symmetrize(P_dw)

    n_xi, m, p = kp.n_xi, kp.m, kp.p
    transform = np.block([
        [np.zeros((n_xi + m, n_xi)), np.eye(n_xi + m)],
        [kp.B_w.T, np.zeros((p, n_xi + m))],
    ])
    P_dw_bar = symmetrize(transform.T @ P_dw @ transform)
    return UncertaintyMultiplier(P_dw=P_dw, P_dw_bar=P_dw_bar,
                                 d_bar=float(d_bar), B_w=kp.B_w)


def multiplier_certificate(mult: UncertaintyMultiplier, delta: np.ndarray) -> np.ndarray:
    """Quadratic form [Delta^T; I]^T P_dw [Delta^T; I] for a candidate recursion."""
    delta = np.asarray(delta, dtype=float)
    stacked = np.vstack([delta.T, np.eye(delta.shape[0])])
    return symmetrize(stacked.T @ mult.P_dw @ stacked)


def cost_factors(Q: np.ndarray, R: np.ndarray, l: int, m: int, p: int):
    """Thin factors Q_r (p x n_xi) and R_r (m x m) of the stage-cost weights."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if Q.shape != (p, p) or eigmin_sym(Q) <= 0:
        raise ValueError("Q must be p x p positive definite")
    if R.shape != (m, m) or eigmin_sym(R) <= 0:
        raise ValueError("R must be m x m positive definite")
    Q_r = sqrtm_psd(Q) @ output_selector(l, m, p)
    R_r = sqrtm_psd(R)
    return Q_r, R_r


def lmi_block_matrix(kp: KnownPart, P_bar: np.ndarray, Q_r: np.ndarray,
                     R_r: np.ndarray, X: np.ndarray, M: np.ndarray,
                     tau: float) -> np.ndarray:
    """Numeric value of the synthesis block matrix at a candidate point.

    Block layout (sizes 2*n_xi+m, n_xi, p+m):
        [ tau*P_bar - diag(X,0,0)   [A'X+B'M; X; M]   0            ]
        [ *                         -X                [Q_r X; R_r M]^T ]
        [ *                         *                 -I           ]
    """
    n_xi, m, p = kp.n_xi, kp.m, kp.p
    s1, s3 = 2 * n_xi + m, p + m
    embed = np.zeros((s1, s1))
    embed[:n_xi, :n_xi] = X
    coupling = np.vstack([kp.A_prime @ X + kp.B_prime @ M, X, M])
    output = np.vstack([Q_r @ X, R_r @ M])
    return np.block([
        [tau * P_bar - embed, coupling, np.zeros((s1, s3))],
        [coupling.T, -X, output.T],
        [np.zeros((s3, s1)), output, -np.eye(s3)],
    ])


@dataclass
class LmiProgram:
    """Feasibility program over (X, M, tau, Gamma) at a gamma set via parameter.

    Gamma enters in the rescaled form Gamma_hat = Gamma / gamma^2 so the
    level parameter appears as 1/gamma in the coupling block; this keeps the
    program well scaled across many decades of gamma.
    """

    problem: cp.Problem
    X: cp.Variable
    M: cp.Variable
    tau: cp.Variable
    Gamma_hat: cp.Variable
    inv_gamma: cp.Parameter
    dim: int
    P_bar_scale: float

    def set_gamma(self, gamma: float) -> None:
        self.inv_gamma.value = 1.0 / gamma


def assemble_lmi(kp: KnownPart, mult: UncertaintyMultiplier,
                 Q: np.ndarray, R: np.ndarray,
                 zero_controller: bool = False,
                 lmi_margin: float = LMI_MARGIN,
                 pd_witness: float = PD_WITNESS) -> LmiProgram:
    """Build the semidefinite feasibility program of the terminal synthesis.

    The multiplier is normalized by its spectral norm (absorbed exactly into
    the free scalar tau) so that flat strictness margins act at the right
    scale.  Strictness is realized with lmi_margin on the block matrix, a
    pd_witness floor on X, and a relative shave on the trace cap; strict
    positivity of Gamma follows from X > 0 through the coupling block.
    """
    n_xi, m, p = kp.n_xi, kp.m, kp.p
    Q_r, R_r = cost_factors(Q, R, kp.l, m, p)

    scale = float(np.linalg.norm(mult.P_dw_bar, 2))
    P_bar = mult.P_dw_bar / scale if scale > 0 else mult.P_dw_bar

    X = cp.Variable((n_xi, n_xi), symmetric=True, name="X")
    M = cp.Variable((m, n_xi), name="M")
    tau = cp.Variable(nonneg=True, name="tau")
    Gamma_hat = cp.Variable((n_xi, n_xi), symmetric=True, name="Gamma_hat")
    inv_gamma = cp.Parameter(nonneg=True, name="inv_gamma")

    s1, s3 = 2 * n_xi + m, p + m
    dim = s1 + n_xi + s3

    embed = cp.bmat([
        [X, np.zeros((n_xi, n_xi + m))],
        [np.zeros((n_xi + m, n_xi)), np.zeros((n_xi + m, n_xi + m))],
    ])
    coupling = cp.vstack([kp.A_prime @ X + kp.B_prime @ M, X, M])
    output = cp.vstack([Q_r @ X, R_r @ M])
    lmi = cp.bmat([
        [tau * P_bar - embed, coupling, np.zeros((s1, s3))],
        [coupling.T, -X, output.T],
        [np.zeros((s3, s1)), output, -np.eye(s3)],
    ])

    eye_n = np.eye(n_xi)
    constraints = [
        X >> pd_witness * eye_n,
        Gamma_hat >> 0,
        cp.bmat([[Gamma_hat, inv_gamma * eye_n], [inv_gamma * eye_n, X]]) >> 0,
        lmi << -lmi_margin * np.eye(dim),
        cp.trace(Gamma_hat) <= 1.0 - 1e-9,
    ]
    if zero_controller:
        constraints.append(M == 0)

    problem = cp.Problem(cp.Minimize(0), constraints)
    return LmiProgram(problem=problem, X=X, M=M, tau=tau, Gamma_hat=Gamma_hat,
                      inv_gamma=inv_gamma, dim=dim, P_bar_scale=scale)


def realization_from_data(bank: DataBank) -> ExtendedRealization:
    """Recursion recovered from the bank (exact for noise-free full-rank data)."""
    kp = known_part(bank.l, bank.m, bank.p)
    delta = (kp.B_w.T @ bank.Xi_plus) @ np.linalg.pinv(bank.Z)
    recursion_row = delta[:, :kp.n_xi]
    D = delta[:, kp.n_xi:]
    return realization_from_recursion(recursion_row, D, bank.l, bank.m, bank.p)


def decrease_matrix(real: ExtendedRealization, P: np.ndarray, K: np.ndarray,
                    Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Closed-loop cost-decrease matrix; negative semidefinite when the
    terminal ingredients are valid for this realization."""
    Acl = real.A + real.B @ K
    Ccl = real.C + real.D @ K
    return symmetrize(Acl.T @ P @ Acl - P + K.T @ R @ K + Ccl.T @ Q @ Ccl)


def synthesize(bank: DataBank, Q: np.ndarray, R: np.ndarray, d_bar: float = 0.0,
               gamma: Optional[float] = None,
               gamma_range: tuple = (1e-2, 1e6), gamma_rel_tol: float = 1e-3,
               max_bisect: int = 40, zero_controller: bool = False,
               solver: Optional[str] = None) -> TerminalIngredients:
    """Terminal cost and controller from data alone.

    With `gamma` given, solves a single feasibility program at that level;
    otherwise bisects geometrically over `gamma_range` for the smallest
    feasible level within `gamma_rel_tol`.  Raises SynthesisInfeasible with
    the failing gate (data rank, LMI feasibility, or terminal-cost
    recovery) and SolverFailure on backend breakdowns.
    """
    if not z_full_row_rank(bank):
        raise SynthesisInfeasible("Z not full row rank")
    kp = known_part(bank.l, bank.m, bank.p)
    mult = uncertainty_multiplier(bank, d_bar)
    program = assemble_lmi(kp, mult, Q, R, zero_controller=zero_controller)

    trace: list = []
    snapshot: dict = {}

    def probe(level: float, strict: bool) -> bool:
        """Feasibility at a level.  Numerical failures on interior probes
        count as not-proven-feasible (conservative for the bisection and
        recorded in the trace); a failure where the verdict is load-bearing
        (strict=True) is surfaced as SolverFailure."""
        program.set_gamma(level)
        info = solvers.solve(program.problem, solver=solver, sdp=True)
        trace.append({"gamma": level, "status": info.status, "time": info.time})
        if info.status == solvers.STATUS_FAILURE:
            if strict:
                raise SolverFailure(
                    f"backend {info.solver} failed at gamma={level:g}: {info.raw_status}")
            return False
        if info.status == solvers.STATUS_OPTIMAL:
            snapshot.update(X=np.array(program.X.value), M=np.array(program.M.value),
                            tau=float(program.tau.value),
                            trace_gamma=float(np.trace(program.Gamma_hat.value)) * level ** 2)
            return True
        return False

    if gamma is not None:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if not probe(gamma, strict=True):
            raise SynthesisInfeasible(f"LMI infeasible at gamma = {gamma:g}")
        achieved = float(gamma)
    else:
        lo, hi = gamma_range
        if not 0 < lo < hi:
            raise ValueError("gamma_range must satisfy 0 < lo < hi")
        if not probe(hi, strict=True):
            raise SynthesisInfeasible(f"LMI infeasible at gamma upper bound {hi:g}")
        best = dict(snapshot)
        if probe(lo, strict=False):
            achieved, best = float(lo), dict(snapshot)
        else:
            achieved = float(hi)
            for _ in range(max_bisect):
                if hi / lo - 1.0 <= gamma_rel_tol:
                    break
                mid = math.sqrt(lo * hi)
                if probe(mid, strict=False):
                    hi, achieved, best = mid, float(mid), dict(snapshot)
                else:
                    lo = mid
        snapshot = best

    X_val = symmetrize(snapshot["X"])
    try:
        X_inv = inv_pd(X_val, cond_limit=1e10)
    except np.linalg.LinAlgError as exc:
        raise SynthesisInfeasible(f"recovered X unusable: {exc}") from exc
    T_y = output_selector(bank.l, bank.m, bank.p)
    P = symmetrize(X_inv - T_y.T @ np.asarray(Q, dtype=float) @ T_y)
    if eigmin_sym(P) <= 0:
        raise SynthesisInfeasible("recovered P is not positive definite")
    K = np.zeros((bank.m, kp.n_xi)) if zero_controller else snapshot["M"] @ X_inv

    data_real = realization_from_data(bank)
    w = np.linalg.eigvalsh(X_val)
    report = {
        "gamma": achieved,
        "d_bar": float(d_bar),
        "tau": snapshot["tau"] * (1.0 / program.P_bar_scale if program.P_bar_scale > 0 else 1.0),
        "trace_gamma_variable": snapshot["trace_gamma"],
        "lmi_dim": program.dim,
        "x_condition": float(w[-1] / w[0]),
        "zero_controller": bool(zero_controller),
        "decrease_lmax_data": eigmax_sym(decrease_matrix(data_real, P, K, Q, R)),
        "bisection": trace,
    }
    return TerminalIngredients(P=P, K=K, gamma=achieved, X=X_val,
                               d_bar=float(d_bar), report=report)


def window_box(u_box: Box, y_box: Box, l: int) -> Box:
    """Constraint box for the stacked window (l input samples, l output samples)."""
    u_rep = u_box.repeated(l)
    y_rep = y_box.repeated(l)
    return Box(np.concatenate([u_rep.lower, y_rep.lower]),
               np.concatenate([u_rep.upper, y_rep.upper]))


def terminal_set_radius(P: np.ndarray, xi_s: np.ndarray, u_box: Box,
                        y_box: Box, l: int) -> float:
    """Largest radius whose P-norm sublevel set around xi_s fits in the box.

    Each finite face contributes (distance to face)^2 / (P^-1 diagonal);
    the minimum is shaved by 1e-9 to keep the inclusion strict.  Returns
    inf when no face is finite.
    """
    P = np.asarray(P, dtype=float)
    xi_s = np.asarray(xi_s, dtype=float).ravel()
    box = window_box(u_box, y_box, l)
    if box.dim != xi_s.shape[0]:
        raise ValueError("setpoint window and box dimensions disagree")
    if box.margin(xi_s) <= 0:
        raise ValueError("setpoint window must lie strictly inside the constraint box")
    P_inv_diag = np.diag(inv_pd(P))

    candidates = []
    finite_hi = np.isfinite(box.upper)
    finite_lo = np.isfinite(box.lower)
    candidates.extend(((box.upper[finite_hi] - xi_s[finite_hi]) ** 2)
                      / P_inv_diag[finite_hi])
    candidates.extend(((xi_s[finite_lo] - box.lower[finite_lo]) ** 2)
                      / P_inv_diag[finite_lo])
    if len(candidates) == 0:
        return math.inf
    return (1.0 - 1e-9) * float(np.min(candidates))


def _ellipsoid_boundary(P: np.ndarray, beta: float, samples: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Rows are points d with d^T P d = beta."""
    w, v = np.linalg.eigh(symmetrize(P))
    inv_half = v @ np.diag(1.0 / np.sqrt(w)) @ v.T
    directions = rng.standard_normal((samples, P.shape[0]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return math.sqrt(beta) * directions @ inv_half.T


def verify_terminal_ingredients(ti: TerminalIngredients,
                                real: ExtendedRealization,
                                Q: np.ndarray, R: np.ndarray,
                                u_box: Box, y_box: Box,
                                u_s, y_s,
                                samples: int = 10_000,
                                rng: Optional[np.random.Generator] = None) -> VerificationReport:
    """Check invariance, constraint admissibility, and cost decrease.

    Failures are report entries, never exceptions.  With beta = inf the
    invariance check degenerates to the P-norm contraction ratio, and box
    admissibility holds only for unconstrained coordinates (a bounded box
    can never contain the full space).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float))
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    xi_s = steady_extended_state(u_s, y_s, real.l)
    Acl = real.A + real.B @ ti.K
    Ccl = real.C + real.D @ ti.K

    decrease_lmax = eigmax_sym(decrease_matrix(real, ti.P, ti.K, Q, R))
    decrease_ok = decrease_lmax <= DECREASE_TOL

    wbox = window_box(u_box, y_box, real.l)
    if math.isinf(ti.beta):
        # Terminal set dropped: invariance degenerates to the P-norm
        # contraction of the closed-loop map, and the box-subset condition
        # is vacuous.  Input/output admissibility must then hold globally,
        # which a bounded box only allows for a vanishing feedback term.
        w, v = np.linalg.eigh(symmetrize(ti.P))
        inv_half = v @ np.diag(1.0 / np.sqrt(w)) @ v.T
        ratio = eigmax_sym(inv_half @ Acl.T @ ti.P @ Acl @ inv_half)
        invariance_slack = max(0.0, ratio - 1.0)
        window_violation = 0.0
        if u_box.is_unbounded:
            input_violation = 0.0
        elif np.allclose(ti.K, 0.0):
            input_violation = u_box.violation(u_s)
        else:
            input_violation = math.inf
        if y_box.is_unbounded:
            output_violation = 0.0
        elif np.allclose(Ccl, 0.0):
            output_violation = y_box.violation(y_s)
        else:
            output_violation = math.inf
        n_used = 0
    else:
        deltas = _ellipsoid_boundary(ti.P, ti.beta, samples, rng)
        images = deltas @ Acl.T
        norms = np.einsum("ij,jk,ik->i", images, ti.P, images)
        invariance_slack = max(0.0, float(np.max(norms)) / ti.beta - 1.0)
        points = deltas + xi_s
        window_violation = max(wbox.violation(row) for row in points)
        inputs = u_s + deltas @ ti.K.T
        input_violation = max(u_box.violation(row) for row in inputs)
        outputs = y_s + deltas @ Ccl.T
        output_violation = max(y_box.violation(row) for row in outputs)
        n_used = samples

    invariance_ok = invariance_slack <= GEOMETRY_TOL
    admissibility_ok = (window_violation <= GEOMETRY_TOL
                        and input_violation <= GEOMETRY_TOL
                        and output_violation <= GEOMETRY_TOL)
    return VerificationReport(
        decrease_lmax=decrease_lmax, decrease_ok=decrease_ok,
        invariance_slack=invariance_slack, invariance_ok=invariance_ok,
        window_violation=window_violation, input_violation=input_violation,
        output_violation=output_violation, admissibility_ok=admissibility_ok,
        beta=ti.beta, samples=n_used)
