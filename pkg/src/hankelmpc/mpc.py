"""Receding-horizon program over the Hankel span and the closed-loop runner.

The open-loop problem optimizes a length-(L+l) input-output window pinned to
the last l measurements, constrained to the span of the recorded data, boxed
on the future section, and finished with the terminal cost / terminal-set
pair.  The runner applies the first optimal input, steps the plant, and
records stability diagnostics.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import cvxpy as cp
import numpy as np

from . import solvers
from .boxes import Box
from .linalg import sqrtm_psd
from .lti import LtiSystem, simulate
from .terminal import TerminalIngredients
from .trajectory import DataBank, split_window, stack_window, steady_extended_state

TERMINAL_MODES = ("full", "cost-only", "none")

# Convergence flag: window error within this relative radius for 5 steps.
CONVERGENCE_RTOL = 1e-4
CONVERGENCE_RUN = 5
# Runaway guard for ablation runs without terminal ingredients.
DIVERGENCE_RTOL = 1e6


@dataclass(frozen=True)
class MpcConfig:
    """Problem data for the receding-horizon controller.

    terminal_mode selects how the certificate is used: "full" applies the
    terminal cost and the set constraint (skipped when the certified radius
    is infinite), "cost-only" applies the cost alone, "none" runs the
    ablation with zero terminal weight.
    """

    L: int
    l: int
    Q: np.ndarray
    R: np.ndarray
    u_box: Box
    y_box: Box
    u_s: np.ndarray
    y_s: np.ndarray
    lambda_alpha: float = 0.0
    terminal_mode: str = "full"
    terminal: Optional[TerminalIngredients] = None

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "u_s", np.atleast_1d(np.asarray(self.u_s, dtype=float)))
        object.__setattr__(self, "y_s", np.atleast_1d(np.asarray(self.y_s, dtype=float)))
        if self.L < 1:
            raise ValueError("prediction horizon must be at least 1")
        if self.l < 1:
            raise ValueError("window length must be at least 1")
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"terminal_mode must be one of {TERMINAL_MODES}")
        if self.Q.shape != (self.p, self.p):
            raise ValueError("Q must be p x p")
        if self.R.shape != (self.m, self.m):
            raise ValueError("R must be m x m")
        if self.terminal_mode != "none":
            if self.terminal is None:
                raise ValueError(f"terminal_mode {self.terminal_mode!r} needs a certificate")
            if self.u_box.violation(self.u_s) > 0 or self.y_box.violation(self.y_s) > 0 \
                    or self.u_box.margin(self.u_s) <= 0 or self.y_box.margin(self.y_s) <= 0:
                raise ValueError("setpoint must lie strictly inside the constraint boxes")
        if self.lambda_alpha < 0:
            raise ValueError("alpha regularization weight must be nonnegative")

    @property
    def m(self) -> int:
        return self.u_s.shape[0]

    @property
    def p(self) -> int:
        return self.y_s.shape[0]

    @property
    def n_xi(self) -> int:
        return (self.m + self.p) * self.l

    @property
    def xi_s(self) -> np.ndarray:
        return steady_extended_state(self.u_s, self.y_s, self.l)

    @property
    def terminal_cost(self) -> np.ndarray:
        if self.terminal_mode == "none":
            return np.zeros((self.n_xi, self.n_xi))
        return self.terminal.P

    @property
    def terminal_radius(self) -> float:
        if self.terminal_mode == "full":
            return self.terminal.beta
        return math.inf


@dataclass(frozen=True)
class MpcSolution:
    """Optimizer output of one receding-horizon solve."""

    status: str
    cost: Optional[float]
    u_pred: Optional[np.ndarray]  # (L, m), indices 0..L-1
    y_pred: Optional[np.ndarray]  # (L, p)
    u_init: Optional[np.ndarray]  # (l, m), indices -l..-1
    y_init: Optional[np.ndarray]
    alpha: Optional[np.ndarray]
    xi_terminal: Optional[np.ndarray]
    solve_time: float

    @property
    def optimal(self) -> bool:
        return self.status == solvers.STATUS_OPTIMAL


class OcpProgram:
    """Pre-built receding-horizon program; the history window is a parameter,
    so closed-loop re-solves reuse the compiled problem.

    enforce_history=False drops the initialization rows (diagnostic use
    only: it shows the rows bind by lowering the optimum)."""

    def __init__(self, bank: DataBank, cfg: MpcConfig, enforce_history: bool = True):
        if bank.l != cfg.l:
            raise ValueError("bank and config window lengths disagree")
        if bank.L != cfg.L:
            raise ValueError("bank and config horizons disagree")
        if bank.m != cfg.m or bank.p != cfg.p:
            raise ValueError("bank and config signal dimensions disagree")
        if cfg.terminal_mode != "none" and cfg.terminal.P.shape != (cfg.n_xi, cfg.n_xi):
            raise ValueError("terminal cost dimension does not match the window")
        self.bank = bank
        self.cfg = cfg
        L, l, m, p = cfg.L, cfg.l, cfg.m, cfg.p

        n_alpha = bank.N - (L + l) + 1
        self.alpha = cp.Variable(n_alpha, name="alpha")
        self.u_bar = cp.Variable((L + l) * m, name="u_bar")  # indices -l..L-1
        self.y_bar = cp.Variable((L + l) * p, name="y_bar")
        self.hist_u = cp.Parameter(l * m, name="hist_u")
        self.hist_y = cp.Parameter(l * p, name="hist_y")

        constraints = [
            self.u_bar == bank.Hu.matrix @ self.alpha,
            self.y_bar == bank.Hy.matrix @ self.alpha,
        ]
        if enforce_history:
            constraints.append(self.u_bar[:l * m] == self.hist_u)
            constraints.append(self.y_bar[:l * p] == self.hist_y)

        u_pred = self.u_bar[l * m:]
        y_pred = self.y_bar[l * p:]
        u_bounds = cfg.u_box.repeated(L)
        y_bounds = cfg.y_box.repeated(L)
        for bounds, var in ((u_bounds, u_pred), (y_bounds, y_pred)):
            lo_idx = np.where(np.isfinite(bounds.lower))[0]
            hi_idx = np.where(np.isfinite(bounds.upper))[0]
            if lo_idx.size:
                constraints.append(var[lo_idx] >= bounds.lower[lo_idx])
            if hi_idx.size:
                constraints.append(var[hi_idx] <= bounds.upper[hi_idx])

        xi_L = cp.hstack([self.u_bar[L * m:], self.y_bar[L * p:]])
        P_half = sqrtm_psd(cfg.terminal_cost)
        beta = cfg.terminal_radius
        if math.isfinite(beta):
            constraints.append(cp.norm(P_half @ (xi_L - cfg.xi_s), 2)
                               <= math.sqrt(beta))

        cost = cp.sum_squares(np.kron(np.eye(L), sqrtm_psd(cfg.R))
                              @ (u_pred - np.tile(cfg.u_s, L)))
        cost = cost + cp.sum_squares(np.kron(np.eye(L), sqrtm_psd(cfg.Q))
                                     @ (y_pred - np.tile(cfg.y_s, L)))
        cost = cost + cp.sum_squares(P_half @ (xi_L - cfg.xi_s))
        if cfg.lambda_alpha > 0:
            cost = cost + cfg.lambda_alpha * cp.sum_squares(self.alpha)

        self._xi_L = xi_L
        self.problem = cp.Problem(cp.Minimize(cost), constraints)

    def set_history(self, history) -> None:
        u_win, y_win = split_window(history, self.cfg.l, self.cfg.m, self.cfg.p)
        self.hist_u.value = u_win.ravel()
        self.hist_y.value = y_win.ravel()

    def solve(self, solver: Optional[str] = None) -> MpcSolution:
        if self.hist_u.value is None:
            raise ValueError("history window not set")
        info = solvers.solve(self.problem, solver=solver)
        if info.status != solvers.STATUS_OPTIMAL:
            return MpcSolution(status=info.status, cost=None, u_pred=None,
                               y_pred=None, u_init=None, y_init=None,
                               alpha=None, xi_terminal=None,
                               solve_time=info.time)
        L, l, m, p = self.cfg.L, self.cfg.l, self.cfg.m, self.cfg.p
        u_all = np.asarray(self.u_bar.value).reshape(L + l, m)
        y_all = np.asarray(self.y_bar.value).reshape(L + l, p)
        return MpcSolution(
            status=info.status, cost=float(info.value),
            u_pred=u_all[l:], y_pred=y_all[l:],
            u_init=u_all[:l], y_init=y_all[:l],
            alpha=np.asarray(self.alpha.value),
            xi_terminal=np.asarray(self._xi_L.value),
            solve_time=info.time)


def build_ocp(bank: DataBank, cfg: MpcConfig, history=None,
              enforce_history: bool = True) -> OcpProgram:
    """Construct the open-loop program; history (window vector) may be set
    now or per solve later."""
    program = OcpProgram(bank, cfg, enforce_history=enforce_history)
    if history is not None:
        program.set_history(history)
    return program


def solve_ocp(program: OcpProgram, solver: Optional[str] = None) -> MpcSolution:
    return program.solve(solver=solver)


def mpc_step(bank: DataBank, cfg: MpcConfig, history,
             solver: Optional[str] = None,
             program: Optional[OcpProgram] = None):
    """One receding-horizon step; returns (first input or None, solution)."""
    if program is None:
        program = build_ocp(bank, cfg)
    program.set_history(history)
    sol = program.solve(solver=solver)
    u0 = sol.u_pred[0] if sol.optimal else None
    return u0, sol


@dataclass
class ClosedLoopTrace:
    """Per-step record of a closed-loop run.

    outcome is "converged" (window error within the convergence radius for
    5 consecutive steps), "infeasible" (a solve failed; loop stopped), or
    "diverged" (budget exhausted without convergence, or runaway growth).
    """

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    cost: np.ndarray
    solver_ms: np.ndarray
    status: List[str]
    outcome: str
    infeasible_at: Optional[int] = None
    converged_at: Optional[int] = None
    config: Optional[MpcConfig] = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return self.t.shape[0]


def run_closed_loop(plant: LtiSystem, x0, bank: DataBank, cfg: MpcConfig,
                    steps: int, solver: Optional[str] = None,
                    warmup_u: Optional[np.ndarray] = None,
                    stop_on_convergence: bool = True) -> ClosedLoopTrace:
    """Receding-horizon loop against a simulated plant.

    The first l measurements come from a warm-up (zero input from x0 by
    default, or a caller-supplied input window); afterwards each step takes
    the last l input-output pairs, solves the program, applies the first
    optimal input, and records the measured output.
    """
    l, m, p = cfg.l, cfg.m, cfg.p
    if warmup_u is None:
        warmup_u = np.zeros((l, m))
    warmup_u = np.asarray(warmup_u, dtype=float).reshape(l, m)
    x_traj, y_warm = simulate(plant, x0, warmup_u)
    x = x_traj[-1]
    u_hist = [warmup_u[k] for k in range(l)]
    y_hist = [y_warm[k] for k in range(l)]

    program = build_ocp(bank, cfg)
    xi_s = cfg.xi_s
    conv_radius = CONVERGENCE_RTOL * (1.0 + np.linalg.norm(xi_s))
    runaway = DIVERGENCE_RTOL * (1.0 + np.linalg.norm(xi_s))

    recs = {"t": [], "u": [], "y": [], "xi": [], "cost": [], "ms": [], "status": []}
    outcome = "diverged"
    infeasible_at = None
    converged_at = None
    run_inside = 0

    for t in range(l, l + steps):
        xi_t = stack_window(np.vstack(u_hist[-l:]), np.vstack(y_hist[-l:]))
        program.set_history(xi_t)
        sol = program.solve(solver=solver)
        recs["t"].append(t)
        recs["xi"].append(xi_t)
        recs["status"].append(sol.status)
        recs["ms"].append(1e3 * sol.solve_time)
        if not sol.optimal:
            recs["u"].append(np.full(m, np.nan))
            recs["y"].append(np.full(p, np.nan))
            recs["cost"].append(np.nan)
            outcome = "infeasible"
            infeasible_at = t
            break
        u_t = sol.u_pred[0]
        x, y_t = plant.step(x, u_t)
        recs["u"].append(u_t)
        recs["y"].append(y_t)
        recs["cost"].append(sol.cost)
        u_hist.append(u_t)
        y_hist.append(y_t)

        err = np.linalg.norm(xi_t - xi_s)
        if err > runaway:
            outcome = "diverged"
            break
        run_inside = run_inside + 1 if err <= conv_radius else 0
        if run_inside >= CONVERGENCE_RUN:
            outcome = "converged"
            converged_at = t
            if stop_on_convergence:
                break

    else:
        if run_inside >= CONVERGENCE_RUN:
            outcome = "converged"

    return ClosedLoopTrace(
        t=np.array(recs["t"], dtype=int),
        u=np.array(recs["u"], dtype=float).reshape(-1, m),
        y=np.array(recs["y"], dtype=float).reshape(-1, p),
        xi=np.array(recs["xi"], dtype=float).reshape(-1, cfg.n_xi),
        cost=np.array(recs["cost"], dtype=float),
        solver_ms=np.array(recs["ms"], dtype=float),
        status=recs["status"],
        outcome=outcome,
        infeasible_at=infeasible_at,
        converged_at=converged_at,
        config=cfg)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Stability diagnostics of a closed-loop trace.

    Cost-decrease margins are J(t+1) - J(t) + |u_t - u_s|_R^2 + |y_t - y_s|_Q^2,
    meaningful as a certified bound only for lambda_alpha = 0 (the report
    flags when the run was regularized).
    """

    margins: np.ndarray
    max_margin: float
    margin_bound: float
    cost_decrease_ok: Optional[bool]
    recursive_feasible: bool
    input_violation: float
    output_violation: float
    decay_rate: Optional[float]
    decay_r2: Optional[float]
    regularized: bool
    outcome: str

    def as_dict(self) -> dict:
        return {
            "max_margin": self.max_margin,
            "margin_bound": self.margin_bound,
            "cost_decrease_ok": self.cost_decrease_ok,
            "recursive_feasible": self.recursive_feasible,
            "input_violation": self.input_violation,
            "output_violation": self.output_violation,
            "decay_rate": self.decay_rate,
            "decay_r2": self.decay_r2,
            "regularized": self.regularized,
            "outcome": self.outcome,
        }


def diagnostics(trace: ClosedLoopTrace, cfg: Optional[MpcConfig] = None) -> DiagnosticsReport:
    """Per-step cost decrease, feasibility, constraint maxima, and decay fit."""
    cfg = cfg if cfg is not None else trace.config
    if cfg is None:
        raise ValueError("a config is required to evaluate the trace")

    ok_steps = [i for i, s in enumerate(trace.status) if s == solvers.STATUS_OPTIMAL]
    recursive_feasible = trace.outcome != "infeasible" and len(ok_steps) == trace.steps

    margins = np.array([
        trace.cost[i + 1] - trace.cost[i]
        + (trace.u[i] - cfg.u_s) @ cfg.R @ (trace.u[i] - cfg.u_s)
        + (trace.y[i] - cfg.y_s) @ cfg.Q @ (trace.y[i] - cfg.y_s)
        for i in range(len(ok_steps) - 1)
    ]) if len(ok_steps) >= 2 else np.empty(0)
    max_margin = float(np.max(margins)) if margins.size else 0.0
    initial_cost = trace.cost[0] if trace.steps and np.isfinite(trace.cost[0]) else 0.0
    margin_bound = 1e-6 * (1.0 + initial_cost)
    regularized = cfg.lambda_alpha > 0
    cost_decrease_ok = None if regularized else bool(max_margin <= margin_bound)

    input_violation = max((cfg.u_box.violation(u) for u in trace.u[ok_steps]),
                          default=0.0)
    output_violation = max((cfg.y_box.violation(y) for y in trace.y[ok_steps]),
                           default=0.0)

    xi_s = cfg.xi_s
    errs = np.linalg.norm(trace.xi - xi_s, axis=1)
    conv_radius = CONVERGENCE_RTOL * (1.0 + np.linalg.norm(xi_s))
    active = errs > max(1e-12 * (1.0 + np.linalg.norm(xi_s)), 1e-300)
    decay_rate = decay_r2 = None
    if np.all(errs <= conv_radius):
        decay_rate, decay_r2 = None, None  # started converged; nothing to fit
    elif np.count_nonzero(active) >= 3:
        ts = trace.t[active].astype(float)
        logs = np.log(errs[active])
        slope, intercept = np.polyfit(ts, logs, 1)
        fit = slope * ts + intercept
        ss_res = float(np.sum((logs - fit) ** 2))
        ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
        decay_rate = float(np.exp(slope))
        decay_r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    return DiagnosticsReport(
        margins=margins, max_margin=max_margin, margin_bound=margin_bound,
        cost_decrease_ok=cost_decrease_ok,
        recursive_feasible=recursive_feasible,
        input_violation=input_violation, output_violation=output_violation,
        decay_rate=decay_rate, decay_r2=decay_r2,
        regularized=regularized, outcome=trace.outcome)
