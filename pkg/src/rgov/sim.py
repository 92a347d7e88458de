"""Fixed-step closed-loop simulation and constraint auditing.

Integration is classical RK4 on a uniform grid; disturbances are held
constant over each integration step (zero-order hold) and command updates
land exactly on grid points because the integrator step divides the
governor period. Traces serialize to CSV with the column layout
`t,x1..xn,v1..vnv,w1..wn,qp_status,zeta`, one row per integration step,
formatted so identical runs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteError
from .governor import Governor, GovernorConfig, StepDiagnostics
from .model import DisturbanceSpec, PlantModel, Polytope, build_model, default_norm_spec
from .norms import NormSpec, vec_norm, vec_norm_stack

__all__ = [
    "Trajectory",
    "Scenario",
    "reference_signal",
    "integrate",
    "sample_disturbance",
    "run_closed_loop",
    "audit",
    "AuditReport",
    "write_csv",
    "read_csv",
]

GOVERNOR_KINDS = ("RG_NL", "RG_L", "NONE")


@dataclass
class Trajectory:
    """Uniform-grid closed-loop record; commands are piecewise constant."""

    times: np.ndarray              # (K+1,)
    states: np.ndarray             # (K+1, n)
    commands: np.ndarray           # (K+1, n_v)
    disturbances: np.ndarray       # (K+1, n) (last row zero-padded)
    qp_status: list = field(default_factory=list)   # per row
    zeta: Optional[np.ndarray] = None               # per row

    def __post_init__(self):
        k = self.times.shape[0]
        if self.states.shape[0] != k or self.commands.shape[0] != k \
                or self.disturbances.shape[0] != k:
            raise ValueError("trajectory arrays must share one time grid")
        dt = np.diff(self.times)
        if dt.size and (dt.max() - dt.min()) > 1e-9 * max(dt.max(), 1e-12):
            raise ValueError("time grid must be uniform")


@dataclass
class Scenario:
    """Everything needed to reproduce one closed-loop experiment."""

    model_name: str
    model_params: dict = field(default_factory=dict)
    config: GovernorConfig = field(default_factory=GovernorConfig)
    disturbance: DisturbanceSpec = field(default_factory=lambda: DisturbanceSpec(0.0))
    seed: int = 0
    reference: list = field(default_factory=list)   # [(t, vector)] steps
    v0: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None                 # None -> x_v(v0)
    duration: float = 60.0
    h: Optional[float] = None                       # None -> dt_sample / 10
    norm: Optional[str] = None                      # None -> model default

    def __post_init__(self):
        if self.h is not None and self.h > self.config.dt_sample / 10 + 1e-15:
            raise ValueError("integrator step must satisfy h <= dt_sample / 10")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    def resolved_h(self) -> float:
        return self.h if self.h is not None else self.config.dt_sample / 10.0


def reference_signal(schedule: list, n_v: int) -> Callable[[float], np.ndarray]:
    """Piecewise-constant r(t) from [(t_start, value)] entries."""
    if not schedule:
        raise ValueError("empty reference schedule")
    items = sorted((float(t), np.atleast_1d(np.asarray(v, dtype=float)))
                   for t, v in schedule)
    times = np.array([t for t, _ in items])
    values = [v for _, v in items]
    if values[0].shape != (n_v,):
        raise ValueError("reference dimension mismatch")

    def r_of_t(t: float) -> np.ndarray:
        idx = int(np.searchsorted(times, t + 1e-12, side="right") - 1)
        return values[max(idx, 0)]

    return r_of_t


def integrate(
    model: PlantModel,
    x0: np.ndarray,
    v_signal: Callable[[float], np.ndarray],
    w_signal: np.ndarray,
    t_span: tuple[float, float],
    h: float,
) -> Trajectory:
    """Classical RK4 with fixed step h; v and w held constant per step."""
    if h <= 0:
        raise ValueError("step h must be positive")
    t0, t1 = t_span
    n_steps = int(round((t1 - t0) / h))
    times = t0 + h * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, model.n))
    commands = np.empty((n_steps + 1, model.n_v))
    states[0] = np.asarray(x0, dtype=float)
    w_signal = np.asarray(w_signal, dtype=float)
    if w_signal.shape[0] < n_steps:
        raise ValueError("w_signal shorter than the integration grid")
    x = states[0].copy()
    f = model.f
    for k in range(n_steps):
        v = np.atleast_1d(v_signal(times[k]))
        commands[k] = v
        w = w_signal[k]
        k1 = f(x, v) + w
        k2 = f(x + 0.5 * h * k1, v) + w
        k3 = f(x + 0.5 * h * k2, v) + w
        k4 = f(x + h * k3, v) + w
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"state left finite range at t = {times[k + 1]:.6g}")
        states[k + 1] = x
    commands[n_steps] = np.atleast_1d(v_signal(times[n_steps]))
    dist = np.vstack([w_signal[:n_steps], np.zeros((1, model.n))])
    return Trajectory(times=times, states=states, commands=commands, disturbances=dist)


def sample_disturbance(
    dspec: DisturbanceSpec,
    grid: np.ndarray,
    seed: int,
    n: int,
    norm_spec: NormSpec,
) -> np.ndarray:
    """Disturbance signal on the integration grid, one n-vector per point.

    Ball: uniform direction on the active subspace scaled so its state-norm
    is a truncated-Gaussian magnitude. Box: componentwise truncated
    Gaussian, rescaled onto the norm ball if the combination exceeds w_max.
    Constant: a fixed extreme point. Deterministic given the seed.
    """
    k = len(grid)
    out = np.zeros((k, n))
    if dspec.w_max == 0.0:
        return out
    active = list(dspec.active) if dspec.active is not None else list(range(n))
    rng = np.random.default_rng(seed)
    sigma = dspec.sigma_ratio * dspec.w_max

    def truncated(shape):
        vals = rng.normal(0.0, sigma, size=shape)
        for _ in range(100):
            mask = np.abs(vals) > dspec.w_max
            if not mask.any():
                break
            vals[mask] = rng.normal(0.0, sigma, size=int(mask.sum()))
        np.clip(vals, -dspec.w_max, dspec.w_max, out=vals)
        return vals

    if dspec.shape == "constant":
        d = np.zeros(n)
        if dspec.direction is not None:
            d[active] = np.asarray(dspec.direction, dtype=float)
        else:
            d[active[0]] = 1.0
        nd = vec_norm(d, norm_spec)
        out[:] = d * (dspec.w_max / nd)
        return out
    if dspec.shape == "ball":
        dirs = rng.normal(size=(k, len(active)))
        dirs[np.abs(dirs).sum(axis=1) == 0.0] = 1.0
        emb = np.zeros((k, n))
        emb[:, active] = dirs
        norms = vec_norm_stack(emb, norm_spec)
        mags = np.abs(truncated(k))
        out = emb * (mags / norms)[:, None]
        return out
    # box
    comps = truncated((k, len(active)))
    out[:, active] = comps
    norms = vec_norm_stack(out, norm_spec)
    over = norms > dspec.w_max
    if over.any():
        out[over] *= (dspec.w_max / norms[over])[:, None]
    return out


@dataclass
class RowAudit:
    row: int
    max_violation: float
    first_violation_time: Optional[float]
    count: int


@dataclass
class AuditReport:
    rows: list
    total_count: int
    max_violation: float

    @property
    def clean(self) -> bool:
        return self.total_count == 0

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "total_count": self.total_count,
            "max_violation": self.max_violation,
            "rows": [
                {
                    "row": r.row,
                    "max_violation": r.max_violation,
                    "first_violation_time": r.first_violation_time,
                    "count": r.count,
                }
                for r in self.rows
            ],
        }


def audit(traj: Trajectory, x_set: Polytope, tol: float = 0.0) -> AuditReport:
    """Per-constraint-row violation statistics over the dense grid."""
    slack = traj.states @ x_set.M.T - x_set.m[None, :]
    rows = []
    total = 0
    worst = float(slack.max()) if slack.size else 0.0
    for i in range(x_set.M.shape[0]):
        s = slack[:, i]
        mask = s > tol
        count = int(mask.sum())
        first = float(traj.times[np.argmax(mask)]) if count else None
        rows.append(RowAudit(row=i, max_violation=float(max(s.max(), 0.0)),
                             first_violation_time=first, count=count))
        total += count
    return AuditReport(rows=rows, total_count=total, max_violation=max(worst, 0.0))


def build_scenario_objects(sc: Scenario):
    """Instantiate (model, norm spec) for a scenario."""
    model = build_model(sc.model_name, sc.model_params)
    if sc.norm is None or sc.norm == "default":
        spec = default_norm_spec(model)
    elif sc.norm in ("l1", "l2", "linf"):
        spec = NormSpec(sc.norm)
    elif sc.norm == "p":
        spec = NormSpec.weighted(model.meta["P"])
    else:
        raise ValueError(f"unknown norm {sc.norm!r}")
    return model, spec


def run_closed_loop(
    sc: Scenario,
    governor_kind: str,
    certs=None,
    model: Optional[PlantModel] = None,
    spec: Optional[NormSpec] = None,
) -> tuple[Trajectory, list[StepDiagnostics]]:
    """Execute one scenario with the selected governor kind.

    NONE passes the raw reference through. The certificate list may be
    shared across calls (seed sweeps); when omitted it is computed here.
    """
    if governor_kind not in GOVERNOR_KINDS:
        raise ValueError(f"governor kind must be one of {GOVERNOR_KINDS}")
    if model is None or spec is None:
        model, spec = build_scenario_objects(sc)
    r_of_t = reference_signal(sc.reference, model.n_v)
    v0 = np.atleast_1d(np.asarray(sc.v0, dtype=float)) if sc.v0 is not None \
        else r_of_t(0.0)
    x0 = np.asarray(sc.x0, dtype=float) if sc.x0 is not None else model.x_v(v0)
    h = sc.resolved_h()
    sub = int(round(sc.config.dt_sample / h))
    if abs(sub * h - sc.config.dt_sample) > 1e-9 * sc.config.dt_sample:
        raise ValueError("integrator step must divide the governor period")
    n_samples = int(round(sc.duration / sc.config.dt_sample))
    k_total = n_samples * sub
    times = h * np.arange(k_total + 1)
    w_signal = sample_disturbance(sc.disturbance, times[:-1], sc.seed, model.n, spec)

    gov = None
    if governor_kind != "NONE":
        if certs is None:
            from .bounds import certify
            certs = certify(model, spec, grid_density=5 if model.n <= 2 else 3)
        gov = Governor(model, certs, spec, sc.config, v0,
                       w_max=sc.disturbance.w_max, kind=governor_kind)

    states = np.empty((k_total + 1, model.n))
    commands = np.empty((k_total + 1, model.n_v))
    qp_status = [""] * (k_total + 1)
    zeta = np.zeros(k_total + 1)
    states[0] = x0
    x = x0.copy()
    v = v0.copy()
    diags: list[StepDiagnostics] = []
    f = model.f
    for ks in range(n_samples):
        t_k = ks * sc.config.dt_sample
        r_now = r_of_t(t_k)
        if gov is not None:
            v, d = gov.step(x, r_now)
            diags.append(d)
            status, zval = d.qp_status, d.zeta
        else:
            v = r_now
            status, zval = "passthrough", 0.0
        base = ks * sub
        for i in range(sub):
            idx = base + i
            commands[idx] = v
            qp_status[idx] = status
            zeta[idx] = zval
            w = w_signal[idx]
            k1 = f(x, v) + w
            k2 = f(x + 0.5 * h * k1, v) + w
            k3 = f(x + 0.5 * h * k2, v) + w
            k4 = f(x + h * k3, v) + w
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFiniteError(f"state left finite range at t = {times[idx + 1]:.6g}")
            states[idx + 1] = x
    commands[k_total] = v
    qp_status[k_total] = qp_status[k_total - 1] if k_total else ""
    zeta[k_total] = zeta[k_total - 1] if k_total else 0.0
    dist = np.vstack([w_signal, np.zeros((1, model.n))])
    traj = Trajectory(times=times, states=states, commands=commands,
                      disturbances=dist, qp_status=qp_status, zeta=zeta)
    return traj, diags


def write_csv(path, traj: Trajectory) -> None:
    """`t,x1..xn,v1..vnv,w1..wn,qp_status,zeta`; reproducible byte-for-byte."""
    n = traj.states.shape[1]
    n_v = traj.commands.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n)]
              + [f"v{i + 1}" for i in range(n_v)]
              + [f"w{i + 1}" for i in range(n)] + ["qp_status", "zeta"])
    status = traj.qp_status or [""] * len(traj.times)
    zeta = traj.zeta if traj.zeta is not None else np.zeros(len(traj.times))
    lines = [",".join(header)]
    for k in range(len(traj.times)):
        nums = ([traj.times[k]] + list(traj.states[k]) + list(traj.commands[k])
                + list(traj.disturbances[k]))
        lines.append(",".join(f"{v:.17g}" for v in nums)
                     + f",{status[k]},{zeta[k]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> Trajectory:
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    n = sum(1 for c in header if c.startswith("x"))
    n_v = sum(1 for c in header if c.startswith("v") and c != "v")
    rows = [line.split(",") for line in text[1:]]
    times = np.array([float(r[0]) for r in rows])
    states = np.array([[float(x) for x in r[1:1 + n]] for r in rows])
    commands = np.array([[float(x) for x in r[1 + n:1 + n + n_v]] for r in rows])
    dist = np.array([[float(x) for x in r[1 + n + n_v:1 + 2 * n + n_v]] for r in rows])
    status = [r[1 + 2 * n + n_v] for r in rows]
    zeta = np.array([float(r[2 + 2 * n + n_v]) for r in rows])
    return Trajectory(times=times, states=states, commands=commands,
                      disturbances=dist, qp_status=status, zeta=zeta)
