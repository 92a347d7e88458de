"""The reference governor: per-sample constraint assembly into linear
inequalities, the QP solve, the initial-condition post-check, and the
optional convergence augmentation.

At each sample the governor holds a linearization at the current command's
steady pair (x_k = x_v(v_k), v_k) and asks for the command step dv that
minimizes ||v_k + dv - r||_S^2 subject to: the tightened state rows at the
check instants t = 0, dt_check, ..., N dt_check; command admissibility; a
steepest-descent move box U_k dv <= zeta u_k scaled by the ancillary
variable zeta >= 0; and, when convergence augmentation is on, the
steady-state margin rows. The tightening per row is

    H1 = (Gamma_v + Gamma~_v(t)) * H_B(M)   (scales with ||dv|| via zeta)
    H2 = ((Gamma_w + Lambda_w) w_max + Gamma~_x(t)) * H_B(M),

and the right-hand side subtracts the margin delta and the free response
M phi(t) (x_meas - x_k). An accepted step must also cover the measured
state jump: ||x_meas - x_k|| <= Lambda_v ||dv*|| + Lambda_w w_max; in
scalar mode that condition enters the QP directly as a signed linear row
instead of a post-check.

The RG_L baseline runs the identical pipeline with the nonlinearity gains
(Gammas and the intersample inflations) zeroed and no jump check, keeping
only the Lambda_w w_max disturbance compensation.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import Certificate, ErrorGains, error_gains, find_certificate, horizon
from .errors import NotAffineError, NotContractiveError
from .linalg import mat_exp
from .model import PlantModel, Polytope
from .norms import NormSpec, op_norm_stack, support_rows, vec_norm, vec_norm_stack
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "GovernorConfig",
    "MoveSet",
    "StepDiagnostics",
    "Governor",
    "move_set",
    "v1_prime",
    "affine_steady_map",
]


@dataclass
class GovernorConfig:
    """Tuning knobs; None fields are resolved against the model/certificate
    at governor construction."""

    S: Optional[np.ndarray] = None          # cost weight, default identity
    dt_sample: float = 0.05                 # governor period [s]
    dt_check: Optional[float] = None        # constraint grid, default dt_sample
    tol_T: float = 1e-3                     # horizon rule e^{mu T} <= tol_T
    delta: Optional[float] = None           # X-underline margin
    zeta_reg: Optional[float] = None        # tiny quadratic weight on zeta
    epsilon: Optional[float] = None         # V1' margin
    kappa: Optional[float] = None           # V2 cost decrement
    convergence_augmentation: bool = False
    scalar_mode: bool = False

    def __post_init__(self):
        if self.dt_sample <= 0:
            raise ValueError("dt_sample must be positive")
        if self.dt_check is not None and self.dt_check < self.dt_sample:
            raise ValueError("dt_check must be >= dt_sample")
        if not (0.0 < self.tol_T < 1.0):
            raise ValueError("tol_T must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "S": None if self.S is None else np.asarray(self.S).tolist(),
            "dt_sample": self.dt_sample,
            "dt_check": self.dt_check,
            "tol_T": self.tol_T,
            "delta": self.delta,
            "zeta_reg": self.zeta_reg,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "convergence_augmentation": self.convergence_augmentation,
            "scalar_mode": self.scalar_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GovernorConfig":
        d = dict(d)
        if d.get("S") is not None:
            d["S"] = np.asarray(d["S"], dtype=float)
        return cls(**d)


@dataclass
class MoveSet:
    """Steepest-descent move box {dv | U dv <= zeta u}."""

    U: np.ndarray
    u: np.ndarray
    v_bar: float


@dataclass
class StepDiagnostics:
    qp_status: str                 # optimal | infeasible | rejected_jump | rejected_cost
    accepted: bool
    jumped: bool
    delta_v: np.ndarray
    zeta: float
    n_rows: int
    n_active: int
    iterations: int
    cost_before: float
    cost_after: float
    wall_time: float


def move_set(v_k: np.ndarray, r: np.ndarray, S: np.ndarray,
             spec: NormSpec) -> MoveSet:
    """Box around the unconstrained steepest-descent direction S (v_k - r).

    Zero components of u are floored at 1e-12 ||u||_inf so the box stays
    full-dimensional; v_bar is the exact norm maximum over the box
    vertices (reference-space norm).
    """
    v_k = np.atleast_1d(np.asarray(v_k, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n_v = v_k.size
    grad = np.abs(S @ (v_k - r))
    u = np.concatenate([grad, grad])
    floor = 1e-12 * u.max(initial=0.0)
    u = np.maximum(u, floor)
    U = np.vstack([np.eye(n_v), -np.eye(n_v)])
    ref = spec.reference()
    corners = itertools.product(*[(u[i], -u[n_v + i]) for i in range(n_v)])
    v_bar = max(vec_norm(np.array(c), ref) for c in corners)
    return MoveSet(U=U, u=u, v_bar=v_bar)


def affine_steady_map(model: PlantModel, tol: float = 1e-9,
                      n_checks: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Extract (C, d) with x_v(v) = C v + d, verifying affinity on random
    segment midpoints inside V. Raises NotAffineError when the map bends."""
    if not model.V.is_box:
        raise NotAffineError("affinity extraction needs a box command set")
    lo, hi = model.V.lo, model.V.hi
    center = (lo + hi) / 2.0
    d0 = model.x_v(center)
    h = (hi - lo) / 4.0
    c = np.zeros((model.n, model.n_v))
    for i in range(model.n_v):
        e = np.zeros(model.n_v)
        e[i] = h[i]
        c[:, i] = (model.x_v(center + e) - d0) / h[i]
    d = d0 - c @ center
    rng = np.random.default_rng(12345)
    scale = max(1.0, float(np.abs(d0).max()))
    for _ in range(n_checks):
        a_pt = lo + (hi - lo) * rng.random(model.n_v)
        b_pt = lo + (hi - lo) * rng.random(model.n_v)
        lamb = rng.random()
        mid = lamb * a_pt + (1 - lamb) * b_pt
        direct = model.x_v(mid)
        if np.abs(direct - (c @ mid + d)).max() > tol * scale:
            raise NotAffineError(f"steady-state map of {model.name} is not affine")
    return c, d


def v1_prime(model: PlantModel, epsilon: float, spec: NormSpec) -> Polytope:
    """Steady-state margin rows M x_v(v) + eps H_B(M) <= m expressed in v
    through the affine steady map. Rows whose v-coefficients vanish are
    constant; satisfiable ones are dropped, an unsatisfiable one means the
    margin set is empty."""
    c, d = affine_steady_map(model)
    sup = support_rows(model.X.M, spec)
    rows = model.X.M @ c
    rhs = model.X.m - epsilon * sup - model.X.M @ d
    trivial = np.abs(rows).sum(axis=1) == 0.0
    if np.any(rhs[trivial] < 0.0):
        raise ValueError("epsilon empties the steady-state margin set")
    return Polytope(rows[~trivial], rhs[~trivial])


class _Linearization:
    """Everything that depends only on the current command v_k."""

    def __init__(self, gov: "Governor", v_k: np.ndarray):
        model, spec, cfg = gov.model, gov.spec, gov.cfg
        self.v_k = v_k.copy()
        self.x_k = model.x_v(v_k)
        self.A = model.f_x(self.x_k, v_k)
        self.B = np.atleast_2d(model.f_v(self.x_k, v_k))
        if self.B.shape[0] != model.n:
            self.B = self.B.reshape(model.n, model.n_v)
        cert = find_certificate(gov.certs, v_k)
        self.cert = cert
        gains = error_gains(model, cert, v_k, spec)
        if gov.kind == "RG_L":
            gains = ErrorGains(lambda_v=gains.lambda_v, lambda_w=gains.lambda_w,
                               gamma_v=0.0, gamma_w=0.0, mu_at_v=gains.mu_at_v)
        self.gains = gains
        mu = gains.mu_at_v
        dtc = gov.dt_check
        self.T, self.N = horizon(cert, mu, dtc, cfg.tol_T)
        n = model.n
        self.phi_step = mat_exp(self.A, dtc)
        self.phi = _phi_powers(self.A, self.phi_step, dtc, self.N)
        # convolution gains D_j = A^{-1} (phi_j - I) B (A is Hurwitz here)
        self.D = np.linalg.solve(self.A, (self.phi - np.eye(n)) @ self.B)
        self.xi = (np.exp(dtc * mu) - 1.0) / mu
        if gov.kind == "RG_L":
            self.gamma_tilde_v = np.zeros(self.N + 1)
        else:
            self.gamma_tilde_v = op_norm_stack(self.phi @ self.B, spec) * self.xi
        self.M_phi = model.X.M @ self.phi          # (N+1, n_m, n)
        self.M_D = model.X.M @ self.D              # (N+1, n_m, n_v)
        self.A_phi = self.A @ self.phi             # (N+1, n, n)
        self.h1 = (gains.gamma_v + self.gamma_tilde_v)[:, None] * gov.sup_x[None, :]
        self.h2_const = (gains.gamma_w + gains.lambda_w) * gov.w_max * gov.sup_x
        self.rhs_const = (model.X.m - gov.delta - model.X.M @ self.x_k)[None, :] - self.h2_const[None, :]
        # static assembly blocks are rebuilt only when the reference moves
        self.r_key = None
        self.static_lhs = None
        self.rhs_tail = None
        self.move = None
        self.scalar = False


def _phi_powers(a: np.ndarray, phi_step: np.ndarray, dtc: float, n_pow: int) -> np.ndarray:
    """phi(j dt_check) for j = 0..N as powers of the one-step transition
    matrix; computed spectrally when A diagonalizes cleanly, by repeated
    multiplication otherwise."""
    n = a.shape[0]
    try:
        lam, v = np.linalg.eig(a)
        vinv = np.linalg.inv(v)
        recon = np.abs((v * lam) @ vinv - a).max()
        if np.isfinite(recon) and recon <= 1e-10 * max(1.0, np.abs(a).max()):
            ex = np.exp(np.outer(np.arange(n_pow + 1) * dtc, lam))
            phis = np.einsum("ij,tj,jk->tik", v, ex, vinv)
            return np.ascontiguousarray(np.real(phis))
    except np.linalg.LinAlgError:
        pass
    phis = np.empty((n_pow + 1, n, n))
    phis[0] = np.eye(n)
    for j in range(1, n_pow + 1):
        phis[j] = phis[j - 1] @ phi_step
    return phis


def _solve_1d(a, b, u_pos, u_neg, s11, zeta_reg, target):
    """Exact minimizer for the one-command QP.

    With a single command the optimal zeta rides its box-minimal value
    (both the regularization and the tightening rows push it down), so the
    problem reduces to clamping the unconstrained step onto a feasible
    dv-interval per sign branch. Returns (status, z) matching solve_qp.
    """
    best = None
    for branch in (1.0, -1.0):
        u = u_pos if branch > 0 else u_neg
        if u <= 0.0:
            # degenerate box: only dv = 0 on this branch
            if b.min() >= -1e-12:
                cand = (0.5 * s11 * target * target, 0.0, 0.0)
                if best is None or cand[0] < best[0] - 1e-15:
                    best = cand
            continue
        c = a[:, 0] + branch * a[:, 1] / u
        lo = 0.0 if branch > 0 else -np.inf
        hi = np.inf if branch > 0 else 0.0
        pos = c > 0
        neg = c < 0
        zero = ~pos & ~neg
        if zero.any() and b[zero].min() < -1e-12:
            continue
        if pos.any():
            hi = min(hi, float((b[pos] / c[pos]).min()))
        if neg.any():
            lo = max(lo, float((b[neg] / c[neg]).max()))
        if lo > hi + 1e-15:
            continue
        dv_free = s11 * target / (s11 + zeta_reg / (u * u))
        dv = min(max(dv_free, lo), hi)
        zeta = branch * dv / u
        cost = 0.5 * s11 * dv * dv - s11 * target * dv + 0.5 * zeta_reg * zeta * zeta
        if best is None or cost < best[0] - 1e-15:
            best = (cost, dv, zeta)
    if best is None:
        return "infeasible", None
    return "optimal", np.array([best[1], best[2]])


class Governor:
    """Single-owner governor state machine.

    kind is "RG_NL" (full error compensation) or "RG_L" (linear-model
    baseline: gamma terms zeroed, no jump check).
    """

    def __init__(
        self,
        model: PlantModel,
        certs: list[Certificate],
        spec: NormSpec,
        cfg: GovernorConfig,
        v0: np.ndarray,
        w_max: float = 0.0,
        kind: str = "RG_NL",
    ):
        if kind not in ("RG_NL", "RG_L"):
            raise ValueError(f"unknown governor kind {kind!r}")
        self.model = model
        self.certs = certs
        self.spec = spec
        self.cfg = cfg
        self.kind = kind
        self.w_max = float(w_max)
        v0 = np.atleast_1d(np.asarray(v0, dtype=float))
        if not model.V.contains(v0):
            raise ValueError("v0 outside the admissible command set")
        n_v = model.n_v
        self.S = np.eye(n_v) if cfg.S is None else np.asarray(cfg.S, dtype=float)
        self.dt_check = cfg.dt_check if cfg.dt_check is not None else cfg.dt_sample
        self.delta = cfg.delta if cfg.delta is not None else 1e-4 * max(1.0, float(np.abs(model.X.m).max()))
        self.zeta_reg = cfg.zeta_reg if cfg.zeta_reg is not None else 1e-8 * float(np.trace(self.S))
        self.sup_x = support_rows(model.X.M, spec)
        self.ref = spec.reference()
        self._lin: Optional[_Linearization] = None
        self._warm: tuple = ()
        self._z_prev: Optional[np.ndarray] = None
        self.v1p: Optional[Polytope] = None
        self.epsilon = cfg.epsilon
        self.kappa = cfg.kappa
        if cfg.convergence_augmentation:
            self._setup_augmentation()
        self.v_k = v0
        self._lin = _Linearization(self, v0)

    # -- augmentation -----------------------------------------------------

    def _setup_augmentation(self):
        """Resolve epsilon/kappa and validate the margin condition
        epsilon > 2 sup (Gamma_w + Lambda_w) w_max over sampled commands."""
        density = 3 if self.model.n_v > 1 else 9
        samples = self.model.V.grid(density)
        worst_w = 0.0
        worst_dir = 0.0
        for vb in samples:
            cert = find_certificate(self.certs, vb)
            g = error_gains(self.model, cert, vb, self.spec)
            worst_w = max(worst_w, g.gamma_w + g.lambda_w)
            worst_dir = max(worst_dir, 2.0 * g.gamma_v + g.lambda_v)
        bound = 2.0 * worst_w * self.w_max
        if self.epsilon is None:
            self.epsilon = 1.05 * bound if bound > 0 else 1e-6
        if self.epsilon <= bound:
            raise ValueError(
                f"epsilon = {self.epsilon:.6g} violates the margin condition "
                f"(needs > {bound:.6g})")
        if self.kappa is None:
            # S-norm lower-bound constant against the reference norm
            c2 = float(np.linalg.eigvalsh((self.S + self.S.T) / 2.0)[0])
            eps_bar = (self.epsilon - bound) / worst_dir if worst_dir > 0 else self.epsilon
            self.kappa = min(0.5 * c2 * eps_bar ** 2, 1e-6)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        self.v1p = v1_prime(self.model, self.epsilon, self.spec)

    # -- public surface ----------------------------------------------------

    @property
    def x_k(self) -> np.ndarray:
        return self._lin.x_k

    @property
    def linearization(self) -> _Linearization:
        return self._lin

    def cost(self, v: np.ndarray, r: np.ndarray) -> float:
        e = np.atleast_1d(v) - np.atleast_1d(r)
        return float(e @ self.S @ e)

    def assemble(self, x_meas: np.ndarray, r: np.ndarray) -> QpProblem:
        """Build the QP in z = (dv, zeta) for the current linearization."""
        qp, _ = self._assemble(np.asarray(x_meas, dtype=float),
                               np.atleast_1d(np.asarray(r, dtype=float)))
        return qp

    def _build_static(self, lin: _Linearization, r: np.ndarray) -> None:
        """Rows that depend only on (linearization, reference)."""
        model, cfg = self.model, self.cfg
        n_v = model.n_v
        nz = n_v + 1
        ms = move_set(self.v_k, r, self.S, self.spec)
        lhs_state = np.concatenate(
            [lin.M_D, (lin.h1 * ms.v_bar)[:, :, None]], axis=2).reshape(-1, nz)
        blocks_a = [lhs_state]
        tail_b = []
        mv = model.V.M
        blocks_a.append(np.hstack([mv, np.zeros((mv.shape[0], 1))]))
        tail_b.append(model.V.m - mv @ self.v_k)
        blocks_a.append(np.hstack([ms.U, -ms.u[:, None]]))
        tail_b.append(np.zeros(ms.U.shape[0]))
        zrow = np.zeros((1, nz))
        zrow[0, n_v] = -1.0
        blocks_a.append(zrow)
        tail_b.append(np.zeros(1))
        # steady-state margin rows (augmentation), ratcheted when v_k is
        # still outside so dv = 0 stays feasible
        if cfg.convergence_augmentation and self.v1p is not None:
            mc, mb = self.v1p.M, self.v1p.m
            excess = np.maximum(mc @ self.v_k - mb, 0.0)
            blocks_a.append(np.hstack([mc, np.zeros((mc.shape[0], 1))]))
            tail_b.append(mb + excess - mc @ self.v_k)
        scalar = cfg.scalar_mode and self.kind == "RG_NL"
        if scalar:
            if n_v != 1:
                raise ValueError("scalar_mode requires a one-dimensional command")
            s = float(np.sign(r[0] - self.v_k[0]))
            rows = np.zeros((2, nz))
            rows[0, 0] = -s
            rows[1, 0] = -lin.gains.lambda_v * s
            blocks_a.append(rows)
            tail_b.append(np.array([0.0, 0.0]))   # second entry filled per step
        lin.static_lhs = np.vstack(blocks_a)
        lin.rhs_tail = np.concatenate(tail_b)
        lin.move = ms
        lin.scalar = scalar
        lin.r_key = r.tobytes()

    def _assemble(self, x_meas: np.ndarray, r: np.ndarray):
        lin = self._lin
        n_v = self.model.n_v
        nz = n_v + 1
        if lin.gains.mu_at_v >= 0:
            raise NotContractiveError("linearization is not contractive")
        if lin.r_key != r.tobytes():
            self._build_static(lin, r)
        x_jump = x_meas - lin.x_k
        if self.kind == "RG_L":
            gtx = np.zeros(lin.N + 1)
        else:
            gtx = vec_norm_stack(lin.A_phi @ x_jump, self.spec) * lin.xi
        rhs_state = (lin.rhs_const
                     - lin.M_phi @ x_jump
                     - gtx[:, None] * self.sup_x[None, :]).reshape(-1)
        b = np.concatenate([rhs_state, lin.rhs_tail])
        if lin.scalar:
            jump_norm = vec_norm(x_jump, self.spec)
            b[-1] = lin.gains.lambda_w * self.w_max - jump_norm
        h = np.zeros((nz, nz))
        h[:n_v, :n_v] = self.S
        h[n_v, n_v] = max(self.zeta_reg, 1e-14)
        g = np.concatenate([self.S @ (self.v_k - r), [0.0]])
        return QpProblem(h, g, lin.static_lhs, b), (lin.move, x_jump, lin.scalar)

    def _feasible_hint(self, qp: QpProblem):
        """Cheap starting points that skip phase-1: dv = 0 or the previous
        optimum."""
        n_v = self.model.n_v
        cands = [np.zeros(n_v + 1)]
        if self._z_prev is not None and self._z_prev.shape == (n_v + 1,):
            cands.append(self._z_prev)
        for z in cands:
            if (qp.A @ z - qp.b).max(initial=0.0) <= 0.0:
                return z
        return None

    def step(self, x_meas: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, StepDiagnostics]:
        """One governor update; returns (v_{k+1}, diagnostics).

        Infeasibility and failed post-checks fall back to holding the
        current command."""
        t0 = time.perf_counter()
        x_meas = np.asarray(x_meas, dtype=float)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        cfg = self.cfg
        qp, (ms, x_jump, scalar) = self._assemble(x_meas, r)
        if self.model.n_v == 1:
            status, z = _solve_1d(qp.A, qp.b, ms.u[0], ms.u[1],
                                  float(self.S[0, 0]), max(self.zeta_reg, 1e-14),
                                  float(r[0] - self.v_k[0]))
            sol = QpSolution(status, z, (), None, None, 1)
            if status == "optimal":
                res = qp.A @ z - qp.b
                sol = QpSolution(status, z, tuple(np.nonzero(res > -1e-9)[0]),
                                 None, float(0.5 * z @ qp.H @ z + qp.g @ z), 1)
        else:
            hint = self._feasible_hint(qp)
            sol = solve_qp(qp, warm_start=self._warm, z0=hint)
        cost_before = self.cost(self.v_k, r)
        diag_kwargs = dict(
            n_rows=qp.n_constraints,
            cost_before=cost_before,
            cost_after=cost_before,
            delta_v=np.zeros(self.model.n_v),
            zeta=0.0,
            n_active=0,
            iterations=sol.iterations,
        )
        if sol.status != "optimal":
            return self.v_k, StepDiagnostics(
                qp_status="infeasible", accepted=False, jumped=False,
                wall_time=time.perf_counter() - t0, **diag_kwargs)
        self._warm = sol.active_set
        self._z_prev = sol.z.copy()
        dv = sol.z[: self.model.n_v]
        zeta = float(sol.z[self.model.n_v])
        diag_kwargs.update(delta_v=dv.copy(), zeta=zeta, n_active=len(sol.active_set))
        gains = self._lin.gains
        if not scalar and self.kind == "RG_NL":
            ref_dv = vec_norm(dv, self.ref)
            covered = vec_norm(x_jump, self.spec) <= (
                gains.lambda_v * ref_dv + gains.lambda_w * self.w_max + 1e-9)
            if not covered:
                return self.v_k, StepDiagnostics(
                    qp_status="rejected_jump", accepted=False, jumped=False,
                    wall_time=time.perf_counter() - t0, **diag_kwargs)
        v_next = self.v_k + dv
        cost_after = self.cost(v_next, r)
        if cfg.convergence_augmentation:
            # cost must drop by kappa per jump (float slack keeps an exact
            # convergence jump from being rejected at cost ~ 1e-16)
            if cost_after > max(cost_before - self.kappa, 0.0) + 1e-12:
                if vec_norm(dv, self.ref) > 1e-14:
                    return self.v_k, StepDiagnostics(
                        qp_status="rejected_cost", accepted=False, jumped=False,
                        wall_time=time.perf_counter() - t0, **diag_kwargs)
        diag_kwargs["cost_after"] = cost_after
        jumped = bool(vec_norm(dv, self.ref) > 1e-14)
        if jumped:
            self.v_k = v_next
            self._lin = _Linearization(self, v_next)
            self._z_prev = None
        return self.v_k, StepDiagnostics(
            qp_status="optimal", accepted=True, jumped=jumped,
            wall_time=time.perf_counter() - t0, **diag_kwargs)
