"""File formats: trajectory CSV, matrix/certificate/plant JSON, trace CSV,
and run manifests.

Doubles are written with 17 significant digits so CSV round trips are exact.
JSON matrices are {rows, cols, data} with row-major data.  Unbounded box
entries and an unbounded terminal radius are encoded as null.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .boxes import Box
from .mpc import ClosedLoopTrace
from .terminal import TerminalIngredients
from .trajectory import IoTrajectory

FLOAT_FMT = "%.17g"
CERTIFICATE_FORMAT = "hankelmpc-certificate-v1"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


# --- matrices ----------------------------------------------------------------

def matrix_to_json(mat) -> dict:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    return {"rows": int(mat.shape[0]), "cols": int(mat.shape[1]),
            "data": [float(v) for v in mat.ravel()]}


def matrix_from_json(obj: dict) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != rows * cols:
        raise ValueError(f"matrix data has {data.size} entries, expected {rows * cols}")
    return data.reshape(rows, cols)


def _bound_to_json(values) -> list:
    return [None if not math.isfinite(v) else float(v) for v in values]


def _bound_from_json(values, sign: float) -> np.ndarray:
    return np.array([sign * math.inf if v is None else float(v) for v in values])


def box_to_json(box: Box) -> dict:
    return {"lower": _bound_to_json(box.lower), "upper": _bound_to_json(box.upper)}


def box_from_json(obj: dict) -> Box:
    return Box.make(_bound_from_json(obj["lower"], -1.0),
                    _bound_from_json(obj["upper"], +1.0))


# --- trajectory CSV ------------------------------------------------------------

def save_trajectory_csv(path, traj: IoTrajectory) -> None:
    """Header k,u_1..u_m,y_1..y_p; one row per sample."""
    path = Path(path)
    header = ["k"] + [f"u_{i+1}" for i in range(traj.m)] \
        + [f"y_{i+1}" for i in range(traj.p)]
    lines = [",".join(header)]
    for k in range(traj.N):
        row = [str(k)] + [_fmt(v) for v in traj.u[k]] + [_fmt(v) for v in traj.y[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path) -> IoTrajectory:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0].strip() != "k":
        raise ValueError(f"{path}: first column must be 'k', got {header[0]!r}")
    m = sum(1 for h in header if h.strip().startswith("u_"))
    p = sum(1 for h in header if h.strip().startswith("y_"))
    if m == 0 or p == 0 or 1 + m + p != len(header):
        raise ValueError(f"{path}: header must be k,u_1..u_m,y_1..y_p")
    u_rows, y_rows = [], []
    for idx, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 1 + m + p:
            raise ValueError(
                f"{path}: row {idx}: expected {1 + m + p} columns, got {len(parts)}")
        try:
            vals = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ValueError(f"{path}: row {idx}: {exc}") from exc
        u_rows.append(vals[:m])
        y_rows.append(vals[m:])
    return IoTrajectory(np.array(u_rows), np.array(y_rows))


# --- certificate JSON -----------------------------------------------------------

def certificate_to_json(ti: TerminalIngredients, l: int, u_s, y_s,
                        Q, R, u_box: Box, y_box: Box,
                        verification: Optional[dict] = None) -> dict:
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float))
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    return {
        "format": CERTIFICATE_FORMAT,
        "l": int(l),
        "m": int(u_s.shape[0]),
        "p": int(y_s.shape[0]),
        "P": matrix_to_json(ti.P),
        "K": matrix_to_json(ti.K),
        "X": matrix_to_json(ti.X),
        "beta": None if math.isinf(ti.beta) else float(ti.beta),
        "gamma": float(ti.gamma),
        "d_bar": float(ti.d_bar),
        "setpoint": {"u_s": [float(v) for v in u_s],
                     "y_s": [float(v) for v in y_s]},
        "u_box": box_to_json(u_box),
        "y_box": box_to_json(y_box),
        "Q": matrix_to_json(Q),
        "R": matrix_to_json(R),
        "report": ti.report,
        "verification": verification,
    }


def save_certificate(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_certificate(path):
    """Returns (TerminalIngredients, context dict with setpoint/boxes/weights)."""
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != CERTIFICATE_FORMAT:
        raise ValueError(f"{path}: not a {CERTIFICATE_FORMAT} file")
    beta = math.inf if obj["beta"] is None else float(obj["beta"])
    ti = TerminalIngredients(
        P=matrix_from_json(obj["P"]), K=matrix_from_json(obj["K"]),
        gamma=float(obj["gamma"]), X=matrix_from_json(obj["X"]),
        d_bar=float(obj["d_bar"]), beta=beta, report=obj.get("report", {}))
    context = {
        "l": int(obj["l"]),
        "u_s": np.asarray(obj["setpoint"]["u_s"], dtype=float),
        "y_s": np.asarray(obj["setpoint"]["y_s"], dtype=float),
        "u_box": box_from_json(obj["u_box"]),
        "y_box": box_from_json(obj["y_box"]),
        "Q": matrix_from_json(obj["Q"]),
        "R": matrix_from_json(obj["R"]),
        "verification": obj.get("verification"),
    }
    return ti, context


# --- plant JSON -----------------------------------------------------------------

def plant_to_json(sys) -> dict:
    return {"A": matrix_to_json(sys.A), "B": matrix_to_json(sys.B),
            "C": matrix_to_json(sys.C), "D": matrix_to_json(sys.D)}


def plant_from_json(obj: dict):
    from .lti import LtiSystem
    return LtiSystem(matrix_from_json(obj["A"]), matrix_from_json(obj["B"]),
                     matrix_from_json(obj["C"]), matrix_from_json(obj["D"]))


# --- trace CSV ------------------------------------------------------------------

def save_trace_csv(path, trace: ClosedLoopTrace) -> None:
    """Columns t,u_1..m,y_1..p,cost,solver_ms,status."""
    path = Path(path)
    m = trace.u.shape[1]
    p = trace.y.shape[1]
    header = ["t"] + [f"u_{i+1}" for i in range(m)] + [f"y_{i+1}" for i in range(p)] \
        + ["cost", "solver_ms", "status"]
    lines = [",".join(header)]
    for i in range(trace.steps):
        row = [str(int(trace.t[i]))]
        row += [_fmt(v) for v in trace.u[i]]
        row += [_fmt(v) for v in trace.y[i]]
        row += [_fmt(trace.cost[i]), _fmt(trace.solver_ms[i]), trace.status[i]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


# --- manifests -------------------------------------------------------------------

def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(path, command: str, params: dict, inputs: dict,
                   outputs: dict) -> dict:
    """Manifest with config hash and input/output file digests."""
    import cvxpy
    import scipy

    manifest = {
        "command": command,
        "params": params,
        "config_hash": config_hash(params),
        "inputs": {name: sha256_of(p) for name, p in inputs.items()},
        "outputs": {name: sha256_of(p) for name, p in outputs.items()},
        "versions": {
            "hankelmpc": "0.1.0",
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "cvxpy": cvxpy.__version__,
        },
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest
