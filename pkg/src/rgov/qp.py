"""Dense convex quadratic programming.

`solve_qp` is a primal active-set method for

    minimize 0.5 z' H z + g' z   subject to   A z <= b,   H > 0,

with a phase-1 that minimizes the maximum constraint violation using the
same machinery (a proximal re-centering loop keeps the tiny regularization
from biasing the feasibility verdict). `oracle_qp` solves the same problem
by enumerating candidate active sets and is intended purely as a test
oracle for small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError, MaxIterationsError, TooLargeError
from .linalg import check_finite

__all__ = ["QpProblem", "QpSolution", "solve_qp", "oracle_qp"]

_FEAS_TOL = 1e-8


@dataclass
class QpProblem:
    """minimize 0.5 z'Hz + g'z  s.t.  A z <= b."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.g.shape != (n,):
            raise DimensionMismatchError("H must be n x n and g length n")
        if self.A.ndim != 2 or self.A.shape[1] != n or self.b.shape != (self.A.shape[0],):
            raise DimensionMismatchError("A must be m x n and b length m")
        if np.abs(self.H - self.H.T).max() > 1e-10 * max(1.0, np.abs(self.H).max()):
            raise ValueError("H must be symmetric to 1e-10")
        check_finite(self.H, self.g, self.A, self.b)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]


@dataclass
class QpSolution:
    status: str                      # "optimal" | "infeasible"
    z: Optional[np.ndarray]
    active_set: tuple
    lam: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int


def _kkt_step(h, grad, a_w):
    """Null-space step for: min 0.5 p'Hp + grad'p  s.t.  A_w p = 0."""
    n = h.shape[0]
    if a_w.shape[0] == 0:
        return np.linalg.solve(h, -grad), np.empty(0)
    qf, rf = np.linalg.qr(a_w.T, mode="complete")
    diag = np.abs(np.diag(rf[: min(a_w.shape[0], n)]))
    tol = max(a_w.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int(np.sum(diag > max(tol, 1e-13)))
    z_basis = qf[:, rank:]
    if z_basis.shape[1] == 0:
        p = np.zeros(n)
    else:
        hr = z_basis.T @ h @ z_basis
        q = np.linalg.lstsq(hr, -(z_basis.T @ grad), rcond=None)[0]
        p = z_basis @ q
    lam = np.linalg.lstsq(a_w.T, -(grad + h @ p), rcond=None)[0]
    return p, lam


def _active_set(h, g, a, b, z, work, max_iter):
    """Core primal active-set loop from a feasible z. Ties broken toward the
    lowest constraint row index."""
    m = a.shape[0]
    work = sorted(work)
    in_work = np.zeros(m, dtype=bool)
    in_work[work] = True
    lam = np.empty(0)
    for it in range(1, max_iter + 1):
        grad = h @ z + g
        a_w = a[work] if work else np.empty((0, len(z)))
        p, lam = _kkt_step(h, grad, a_w)
        if np.abs(p).max(initial=0.0) <= 1e-11 * (1.0 + np.abs(z).max(initial=0.0)):
            if not work or lam.min() >= -1e-10:
                return "optimal", z, work, lam, it
            drop = int(np.argmin(lam))
            in_work[work[drop]] = False
            work.pop(drop)
            continue
        ap = a @ p
        mask = (~in_work) & (ap > 1e-14)
        alpha, blocking = 1.0, -1
        if mask.any():
            idx = np.nonzero(mask)[0]
            ratios = (b[idx] - a[idx] @ z) / ap[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < alpha - 1e-15:
                alpha = max(float(ratios[j]), 0.0)
                blocking = int(idx[j])
        z = z + alpha * p
        if blocking >= 0:
            in_work[blocking] = True
            work.append(blocking)
            work.sort()
    return "maxiter", z, work, lam, max_iter


def _phase1(a, b, max_iter):
    """Minimize the max violation with the same active-set machinery.

    The auxiliary QP min 0.5*eps||z - z_ref||^2 + 0.5 s^2 s.t. Az - s <= b,
    s >= 0 is re-centered at its own solution a few times so the epsilon
    regularization cannot bias the verdict at the 1e-8 threshold.
    """
    m, n = a.shape
    z = np.zeros(n)
    scale = 1.0 + (np.abs(b).max() if m else 0.0)
    eps_r = 1e-10
    s_prev = np.inf
    s = max(0.0, float((a @ z - b).max()))
    for _ in range(30):
        if s <= 1e-9:
            return z, s
        hp = np.zeros((n + 1, n + 1))
        hp[:n, :n] = eps_r * np.eye(n)
        hp[n, n] = 1.0
        gp = np.concatenate([-eps_r * z, [0.0]])
        ap = np.vstack([
            np.hstack([a, -np.ones((m, 1))]),
            np.concatenate([np.zeros(n), [-1.0]]),
        ])
        bp = np.concatenate([b, [0.0]])
        z0 = np.concatenate([z, [s * (1.0 + 1e-9) + 1e-12 * scale]])
        status, zz, _, _, _ = _active_set(hp, gp, ap, bp, z0, [], max_iter)
        if status != "optimal":
            return zz[:n], float(zz[n])
        z, s = zz[:n], float(zz[n])
        if s <= 1e-10 * scale or abs(s_prev - s) <= 1e-12 * scale:
            return z, s
        s_prev = s
    return z, s


def solve_qp(
    problem: QpProblem,
    warm_start: Optional[tuple] = None,
    z0: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
) -> QpSolution:
    """Primal-dual active-set solve.

    `z0` is an optional starting-point hint (used when already feasible,
    skipping phase-1); `warm_start` seeds the working set with rows active
    at the starting point. Raises MaxIterationsError when the iteration
    budget (default 50 * (m + 1)) runs out, which signals solver failure
    rather than model infeasibility.
    """
    h, g, a, b = problem.H, problem.g, problem.A, problem.b
    m = problem.n_constraints
    if max_iter is None:
        max_iter = 50 * (m + 1)
    if m == 0:
        z = np.linalg.solve(h, -g)
        return QpSolution("optimal", z, (), np.empty(0), float(0.5 * z @ h @ z + g @ z), 1)
    total_it = 0
    z = None
    if z0 is not None:
        z0 = np.asarray(z0, dtype=float)
        if z0.shape == (problem.n,) and (a @ z0 - b).max(initial=0.0) <= 0.0:
            z = z0
    if z is None:
        z, s = _phase1(a, b, max_iter)
        if s > _FEAS_TOL:
            return QpSolution("infeasible", None, (), None, None, total_it)
        viol = a @ z - b
        bad = np.nonzero(viol > 0)[0]
        if bad.size:
            corr = np.linalg.lstsq(a[bad], viol[bad], rcond=None)[0]
            z_proj = z - corr
            if (a @ z_proj - b).max() <= 1e-9:
                z = z_proj
    work = []
    if warm_start:
        res = a @ z - b
        work = [int(i) for i in warm_start if 0 <= i < m and abs(res[int(i)]) < 1e-9]
    status, z, work, lam, it = _active_set(h, g, a, b, z, work, max_iter)
    total_it += it
    if status == "maxiter":
        raise MaxIterationsError(f"active set exceeded {max_iter} iterations")
    # KKT quality: tiny residual violations are cleaned up by one more pass
    feas = float((a @ z - b).max(initial=0.0))
    if feas > _FEAS_TOL:
        raise MaxIterationsError("solver terminated with an infeasible iterate")
    obj = float(0.5 * z @ h @ z + g @ z)
    return QpSolution("optimal", z, tuple(work), lam, obj, total_it)


def oracle_qp(problem: QpProblem) -> QpSolution:
    """Brute-force reference: enumerate every subset of constraints as a
    candidate active set, solve the equality KKT system, filter by primal
    and dual feasibility, and return the best candidate.

    Limited to 12 constraints; feasibility is decided by enumerating the
    same phase-1 program used nowhere else in this function's caller path.
    """
    h, g, a, b = problem.H, problem.g, problem.A, problem.b
    m = problem.n_constraints
    if m > 12:
        raise TooLargeError(f"enumeration oracle limited to 12 constraints, got {m}")
    feasible = _oracle_feasible(a, b)
    if not feasible:
        return QpSolution("infeasible", None, (), None, None, 0)
    best = None
    n = problem.n
    for k in range(0, m + 1):
        for subset in itertools.combinations(range(m), k):
            s = list(subset)
            if k == 0:
                try:
                    z = np.linalg.solve(h, -g)
                except np.linalg.LinAlgError:
                    continue
                lam = np.empty(0)
            else:
                kkt = np.block([[h, a[s].T], [a[s], np.zeros((k, k))]])
                rhs = np.concatenate([-g, b[s]])
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
                if np.linalg.norm(kkt @ sol - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
                    continue
                z, lam = sol[:n], sol[n:]
            if (a @ z - b).max(initial=0.0) > 1e-8:
                continue
            if lam.size and lam.min() < -1e-9:
                continue
            obj = float(0.5 * z @ h @ z + g @ z)
            if best is None or obj < best.objective - 1e-12:
                best = QpSolution("optimal", z, tuple(s), lam, obj, 0)
    if best is None:
        return QpSolution("infeasible", None, (), None, None, 0)
    return best


def _oracle_feasible(a, b) -> bool:
    """Feasibility of {Az <= b} by enumeration on the strictly convex
    program min 0.5*eps||z||^2 + 0.5 s^2 + s  s.t.  Az - s <= b."""
    m, n = a.shape
    eps_r = 1e-9
    h = np.zeros((n + 1, n + 1))
    h[:n, :n] = eps_r * np.eye(n)
    h[n, n] = 1.0
    g = np.concatenate([np.zeros(n), [1.0]])
    aa = np.hstack([a, -np.ones((m, 1))])
    best = None
    for k in range(0, m + 1):
        for subset in itertools.combinations(range(m), k):
            s = list(subset)
            if k == 0:
                z = np.linalg.solve(h, -g)
                lam = np.empty(0)
            else:
                kkt = np.block([[h, aa[s].T], [aa[s], np.zeros((k, k))]])
                rhs = np.concatenate([-g, b[s]])
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
                if np.linalg.norm(kkt @ sol - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
                    continue
                z, lam = sol[: n + 1], sol[n + 1:]
            if (aa @ z - b).max(initial=0.0) > 1e-9:
                continue
            if lam.size and lam.min() < -1e-9:
                continue
            obj = float(0.5 * z @ h @ z + g @ z)
            if best is None or obj < best[0]:
                best = (obj, float(z[n]))
    if best is None:
        return False
    return best[1] <= _FEAS_TOL
