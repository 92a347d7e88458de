"""Plant models: dynamics, Jacobians, steady-state maps, and admissible
sets, plus the two built-in case studies.

A plant is pre-stabilized: its vector field f(x, v) already contains the
nominal controller, v is the reference command, and an additive disturbance
w enters the state equation directly. Every constant command in the
admissible set V has a unique steady state x_v(v).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AdmissibleSetError, DimensionMismatchError
from .linalg import check_finite, solve_care, solve_linear
from .norms import NormSpec

__all__ = [
    "Polytope",
    "PlantModel",
    "DisturbanceSpec",
    "linearize",
    "example1",
    "spacecraft",
    "build_model",
    "default_norm_spec",
]


@dataclass(frozen=True)
class Polytope:
    """{z | M z <= m}; `lo`/`hi` are set when constructed as a box."""

    M: np.ndarray
    m: np.ndarray
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        m = np.asarray(self.m, dtype=float)
        check_finite(M, m)
        if M.ndim != 2 or m.ndim != 1 or M.shape[0] != m.shape[0]:
            raise DimensionMismatchError("polytope rows of M must match length of m")
        if np.any(np.abs(M).sum(axis=1) == 0.0):
            raise ValueError("polytope has a zero row")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "m", m)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "Polytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lo < hi componentwise")
        d = lo.size
        M = np.vstack([np.eye(d), -np.eye(d)])
        m = np.concatenate([hi, -lo])
        return cls(M, m, lo=lo, hi=hi)

    @property
    def dim(self) -> int:
        return self.M.shape[1]

    @property
    def is_box(self) -> bool:
        return self.lo is not None

    def contains(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.M @ np.asarray(z, dtype=float) <= self.m + tol))

    def violation(self, z: np.ndarray) -> float:
        """Largest constraint-row excess (<= 0 inside)."""
        return float((self.M @ np.asarray(z, dtype=float) - self.m).max())

    def grid(self, density: int) -> np.ndarray:
        """Uniform mesh over the box hull, density points per dimension."""
        if not self.is_box:
            raise ValueError("grid sampling requires a box polytope")
        if density < 2:
            raise ValueError("grid density must be >= 2 points per dimension")
        axes = [np.linspace(l, h, density) for l, h in zip(self.lo, self.hi)]
        pts = np.array(list(itertools.product(*axes)))
        return pts

    def vertices(self) -> np.ndarray:
        if not self.is_box:
            raise ValueError("vertex enumeration requires a box polytope")
        corners = itertools.product(*[(l, h) for l, h in zip(self.lo, self.hi)])
        return np.array(list(corners))

    def split_uniform(self, cells_per_dim: int) -> list["Polytope"]:
        """Partition a box into cells_per_dim^dim congruent sub-boxes."""
        if not self.is_box:
            raise ValueError("partitioning requires a box polytope")
        edges = [np.linspace(l, h, cells_per_dim + 1) for l, h in zip(self.lo, self.hi)]
        out = []
        for idx in itertools.product(range(cells_per_dim), repeat=self.dim):
            lo = np.array([edges[d][i] for d, i in enumerate(idx)])
            hi = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
            out.append(Polytope.box(lo, hi))
        return out


@dataclass
class PlantModel:
    """Closed-loop plant: field f(x, v), Jacobians, steady-state map, and
    the admissible sets X (states) and V (commands)."""

    name: str
    n: int
    n_v: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_v: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_v: Callable[[np.ndarray], np.ndarray]
    X: Polytope
    V: Polytope
    meta: dict = field(default_factory=dict)


@dataclass
class DisturbanceSpec:
    """Bounded disturbance description.

    w_max bounds vec_norm(w) in the governor's norm. `shape` is one of
    "ball" (uniform direction, truncated-Gaussian magnitude), "box"
    (componentwise truncated Gaussian), or "constant" (a fixed extreme
    point, for worst-case stress runs). `active` lists the state indices
    the disturbance enters; None means all of them.
    """

    w_max: float
    shape: str = "ball"
    sigma_ratio: float = 0.5
    active: Optional[tuple] = None
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.w_max < 0:
            raise ValueError("w_max must be >= 0")
        if self.shape not in ("ball", "box", "constant"):
            raise ValueError(f"unknown disturbance shape {self.shape!r}")
        if self.active is not None:
            self.active = tuple(int(i) for i in self.active)

    def to_dict(self) -> dict:
        d = {"w_max": self.w_max, "shape": self.shape, "sigma_ratio": self.sigma_ratio}
        if self.active is not None:
            d["active"] = list(self.active)
        if self.direction is not None:
            d["direction"] = np.asarray(self.direction, dtype=float).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DisturbanceSpec":
        return cls(
            w_max=float(d["w_max"]),
            shape=d.get("shape", "ball"),
            sigma_ratio=float(d.get("sigma_ratio", 0.5)),
            active=tuple(d["active"]) if d.get("active") is not None else None,
            direction=np.asarray(d["direction"], dtype=float) if d.get("direction") is not None else None,
        )


def linearize(model: PlantModel, v_bar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians at the steady pair (x_v(v_bar), v_bar)."""
    v_bar = np.atleast_1d(np.asarray(v_bar, dtype=float))
    if not model.V.contains(v_bar):
        raise AdmissibleSetError(f"command {v_bar} outside V for {model.name}")
    xs = model.x_v(v_bar)
    return model.f_x(xs, v_bar), model.f_v(xs, v_bar)


def example1() -> PlantModel:
    """Second-order system with a scalar command:

        x1' = -0.5 sin(x1) + x2 + 0.5 v + w
        x2' = -sin(x1) - 1.5 x2 + v

    Steady state (arcsin(v), 0); X = [-pi/4, pi/4] x [-0.2, 0.2];
    V = [-sin(pi/4), sin(pi/4)], the largest interval whose steady states
    stay inside X's first coordinate range.
    """
    fv_const = np.array([[0.5], [1.0]])

    def f(x, v):
        s = np.sin(x[0])
        vv = v[0]
        return np.array([-0.5 * s + x[1] + 0.5 * vv, -s - 1.5 * x[1] + vv])

    def f_x(x, v):
        c = np.cos(x[0])
        return np.array([[-0.5 * c, 1.0], [-c, -1.5]])

    def f_v(x, v):
        return fv_const

    def x_v(v):
        return np.array([np.arcsin(v[0]), 0.0])

    r = np.sin(np.pi / 4)
    return PlantModel(
        name="example1",
        n=2,
        n_v=1,
        f=f,
        f_x=f_x,
        f_v=f_v,
        x_v=x_v,
        X=Polytope.box([-np.pi / 4, -0.2], [np.pi / 4, 0.2]),
        V=Polytope.box([-r], [r]),
    )


def spacecraft(
    inertia: Sequence[float] = (120.0, 100.0, 80.0),
    q: Optional[np.ndarray] = None,
    r: Optional[np.ndarray] = None,
    eps_margin: float = 0.01,
) -> PlantModel:
    """Rigid-body attitude plant under an LQR tracking the commanded 3-2-1
    Euler angles.

    State (phi, theta, psi, w1, w2, w3); torque M = -K (x - [v; 0]) with
    K = R^{-1} B' P from the Riccati equation for the double-integrator
    design pair A = [[0, I], [0, 0]], B = [0; J^{-1}]. Disturbances enter
    the angular accelerations directly. X bounds |angles| <= 0.2 and
    |w_i| <= 0.05; V shrinks the angle range by eps_margin so steady states
    are strictly interior.
    """
    J = np.asarray(inertia, dtype=float)
    if J.shape != (3,) or np.any(J <= 0):
        raise ValueError("inertia must be three positive values")
    q = np.eye(6) if q is None else np.asarray(q, dtype=float)
    r = 1e-3 * np.eye(3) if r is None else np.asarray(r, dtype=float)
    a_design = np.zeros((6, 6))
    a_design[:3, 3:] = np.eye(3)
    b_design = np.vstack([np.zeros((3, 3)), np.diag(1.0 / J)])
    p = solve_care(a_design, b_design, q, r)
    k = solve_linear(r, b_design.T @ p)
    fv_const = np.vstack([np.zeros((3, 3)), (1.0 / J)[:, None] * k[:, :3]])
    jinv = 1.0 / J
    g1 = (J[1] - J[2]) / J[0]
    g2 = (J[2] - J[0]) / J[1]
    g3 = (J[0] - J[1]) / J[2]

    def f(x, v):
        ph, th = x[0], x[1]
        w1, w2, w3 = x[3], x[4], x[5]
        # kinematics singularity at |theta| = pi/2 is far outside X
        assert abs(th) < 1.0, "pitch left the guarded kinematics range"
        sph, cph = np.sin(ph), np.cos(ph)
        cth = np.cos(th)
        tth = np.tan(th)
        err = x - np.concatenate([v, (0.0, 0.0, 0.0)])
        u = -(k @ err)
        return np.array([
            w1 + sph * tth * w2 + cph * tth * w3,
            cph * w2 - sph * w3,
            (sph * w2 + cph * w3) / cth,
            g1 * w2 * w3 + jinv[0] * u[0],
            g2 * w3 * w1 + jinv[1] * u[1],
            g3 * w1 * w2 + jinv[2] * u[2],
        ])

    def f_x(x, v):
        ph, th = x[0], x[1]
        w1, w2, w3 = x[3], x[4], x[5]
        sph, cph = np.sin(ph), np.cos(ph)
        sth, cth = np.sin(th), np.cos(th)
        tth = sth / cth
        fx = np.zeros((6, 6))
        fx[0, 0] = cph * tth * w2 - sph * tth * w3
        fx[0, 1] = (sph * w2 + cph * w3) / cth ** 2
        fx[0, 3:] = (1.0, sph * tth, cph * tth)
        fx[1, 0] = -sph * w2 - cph * w3
        fx[1, 3:] = (0.0, cph, -sph)
        fx[2, 0] = (cph * w2 - sph * w3) / cth
        fx[2, 1] = (sph * w2 + cph * w3) * sth / cth ** 2
        fx[2, 3:] = (0.0, sph / cth, cph / cth)
        fx[3, 4] = g1 * w3
        fx[3, 5] = g1 * w2
        fx[4, 3] = g2 * w3
        fx[4, 5] = g2 * w1
        fx[5, 3] = g3 * w2
        fx[5, 4] = g3 * w1
        fx[3:, :] -= jinv[:, None] * k
        return fx

    def f_v(x, v):
        return fv_const

    def x_v(v):
        return np.concatenate([v, (0.0, 0.0, 0.0)])

    ang = 0.2
    return PlantModel(
        name="spacecraft",
        n=6,
        n_v=3,
        f=f,
        f_x=f_x,
        f_v=f_v,
        x_v=x_v,
        X=Polytope.box([-ang] * 3 + [-0.05] * 3, [ang] * 3 + [0.05] * 3),
        V=Polytope.box([-(ang - eps_margin)] * 3, [(ang - eps_margin)] * 3),
        meta={"P": p, "K": k, "J": J, "A_design": a_design, "B_design": b_design,
              "Q": q, "R": r},
    )


def build_model(name: str, params: Optional[dict] = None) -> PlantModel:
    """Resolve a built-in model by name (harness config entry point)."""
    params = dict(params or {})
    if name == "example1":
        return example1()
    if name == "spacecraft":
        kwargs = {}
        if "inertia" in params:
            kwargs["inertia"] = params["inertia"]
        if "Q" in params:
            kwargs["q"] = np.asarray(params["Q"], dtype=float)
        if "R" in params:
            kwargs["r"] = np.asarray(params["R"], dtype=float)
        if "eps_margin" in params:
            kwargs["eps_margin"] = float(params["eps_margin"])
        return spacecraft(**kwargs)
    raise ValueError(f"unknown model {name!r}")


def default_norm_spec(model: PlantModel) -> NormSpec:
    """The norm family each case study was designed with."""
    if model.name == "spacecraft":
        return NormSpec.weighted(model.meta["P"])
    return NormSpec.l2()
