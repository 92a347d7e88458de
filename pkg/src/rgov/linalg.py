"""Dense real matrix kernels: linear solves, symmetric eigenvalues, the
matrix exponential, convolution integrals of the exponential, and a
continuous-time algebraic Riccati solver.

Everything here operates on plain numpy arrays (row-major, float64) and is a
pure function of its inputs. LAPACK (via numpy/scipy) backs the
factorizations; the matrix exponential and the Riccati sign iteration are
implemented on top of those primitives.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatchError,
    NoConvergenceError,
    NonFiniteError,
    NotStabilizableError,
    SingularMatrixError,
)

__all__ = [
    "check_finite",
    "solve_linear",
    "sym_eig_max",
    "mat_exp",
    "convolution_gain",
    "solve_care",
]


def check_finite(*arrays) -> None:
    """Reject NaN/Inf in any input array."""
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("non-finite entries in input")


def _as_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got {a.shape}")
    return a


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b by LU with partial pivoting.

    Raises SingularMatrixError when a pivot falls below 1e-12 * ||A||_inf.
    """
    a = _as_square(a, "A")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatchError(f"b has length {b.shape[0]}, A is {a.shape}")
    check_finite(a, b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    anorm = np.abs(a).sum(axis=1).max() if a.size else 0.0
    if np.abs(np.diag(lu)).min() < 1e-12 * anorm:
        raise SingularMatrixError("pivot below 1e-12 * ||A||_inf")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def sym_eig_max(s: np.ndarray) -> float:
    """Largest eigenvalue of the symmetric part (S + S^T)/2."""
    s = _as_square(s, "S")
    check_finite(s)
    return float(np.linalg.eigvalsh((s + s.T) / 2.0)[-1])


def mat_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{A t} by scaling and squaring with a fixed-order Pade core.

    The argument is scaled so ||A t / 2^s||_inf <= 0.5 before the [7/7]
    Pade approximant, then squared back.
    """
    a = _as_square(a, "A")
    if not np.isfinite(t):
        raise NonFiniteError("t must be finite")
    check_finite(a)
    n = a.shape[0]
    x = a * t
    nrm = np.abs(x).sum(axis=1).max() if n else 0.0
    s = max(0, int(np.ceil(np.log2(nrm / 0.5)))) if nrm > 0.5 else 0
    x = x / (2.0 ** s)
    # Pade [7/7]: coefficients of p(x); q(x) = p(-x); Horner in x^2
    c = (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0)
    eye = np.eye(n)
    x2 = x @ x
    u = c[7] * x2 + c[5] * eye
    u = u @ x2 + c[3] * eye
    u = u @ x2 + c[1] * eye
    u = x @ u                                  # odd part
    v = c[6] * x2 + c[4] * eye
    v = v @ x2 + c[2] * eye
    v = v @ x2 + c[0] * eye                    # even part
    e = solve_linear(v - u, v + u)
    for _ in range(s):
        e = e @ e
    return e


def _simpson_convolution(a: np.ndarray, bv: np.ndarray, t: float, n: int = 256) -> np.ndarray:
    """Composite-Simpson quadrature of int_0^t e^{A s} Bv ds with n intervals."""
    if n % 2:
        n += 1
    h = t / n
    acc = mat_exp(a, 0.0) @ bv + mat_exp(a, t) @ bv
    for k in range(1, n):
        w = 4.0 if k % 2 else 2.0
        acc = acc + w * (mat_exp(a, k * h) @ bv)
    return acc * (h / 3.0)


def convolution_gain(a: np.ndarray, bv: np.ndarray, t: float) -> np.ndarray:
    """int_0^t e^{A (t - tau)} Bv dtau.

    Uses the closed form A^{-1} (e^{A t} - I) Bv when A is invertible and
    falls back to composite-Simpson quadrature (step <= t/256) otherwise.
    """
    a = _as_square(a, "A")
    bv = np.asarray(bv, dtype=float)
    if bv.ndim == 1:
        bv = bv[:, None]
    if bv.shape[0] != a.shape[0]:
        raise DimensionMismatchError("Bv rows must match A")
    check_finite(a, bv)
    if t == 0.0:
        return np.zeros_like(bv)
    try:
        return solve_linear(a, (mat_exp(a, t) - np.eye(a.shape[0])) @ bv)
    except SingularMatrixError:
        return _simpson_convolution(a, bv, t)


def solve_care(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Continuous-time algebraic Riccati equation A'P + PA - PBR^{-1}B'P + Q = 0.

    Solved via the matrix sign function of the Hamiltonian
    [[A, -BR^{-1}B'], [-Q, -A']] with the Newton iteration Z <- (Z + Z^{-1})/2.
    Returns the symmetric PSD stabilizing solution.
    """
    a = _as_square(a, "A")
    q = _as_square(q, "Q")
    r = _as_square(r, "R")
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    n = a.shape[0]
    if b.shape[0] != n or q.shape[0] != n or r.shape[0] != b.shape[1]:
        raise DimensionMismatchError("inconsistent CARE dimensions")
    check_finite(a, b, q, r)
    g = b @ solve_linear(r, b.T)
    ham = np.block([[a, -g], [-q, -a.T]])
    z = ham.copy()
    converged = False
    for _ in range(100):
        try:
            zinv = np.linalg.inv(z)
        except np.linalg.LinAlgError:
            raise NotStabilizableError("sign iteration hit a singular iterate")
        z_next = 0.5 * (z + zinv)
        delta = np.linalg.norm(z_next - z, "fro")
        z = z_next
        if delta <= 1e-14 * max(1.0, np.linalg.norm(z, "fro")):
            converged = True
            break
    if not converged:
        raise NoConvergenceError("matrix sign iteration did not converge in 100 steps")
    w11, w12 = z[:n, :n], z[:n, n:]
    w21, w22 = z[n:, :n], z[n:, n:]
    lhs = np.vstack([w12, w22 + np.eye(n)])
    rhs = -np.vstack([w11 + np.eye(n), w21])
    p, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    p = (p + p.T) / 2.0
    resid = a.T @ p + p @ a - p @ g @ p + q
    if np.linalg.norm(resid, "fro") > 1e-8 * max(np.linalg.norm(q, "fro"), 1e-30):
        raise NotStabilizableError("extracted P fails the Riccati residual test")
    if q.any() and np.linalg.eigvalsh(p)[0] < -1e-10 * max(1.0, np.linalg.norm(p, "fro")):
        raise NotStabilizableError("extracted P is not positive semidefinite")
    return p
