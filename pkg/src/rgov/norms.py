"""Vector norms, induced operator norms, logarithmic norms, and unit-ball
support functions for the four norm families used by the governor:
l1, l2, l-infinity, and the P-weighted norm sqrt(x' P x).

The logarithmic norm of F is the one-sided derivative of ||I + h F|| at
h -> 0+. All four families admit the closed forms implemented here; in
particular the weighted family uses the largest eigenvalue of the symmetric
part of P^{1/2} F P^{-1/2}.

For a weighted state norm the reference space R^{n_v} has no natural weight;
`NormSpec.reference()` returns the plain Euclidean family used for ||dv||
and for the domain side of rectangular operator norms.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError
from .linalg import check_finite

__all__ = [
    "NormSpec",
    "vec_norm",
    "op_norm",
    "log_norm",
    "dual_support",
    "support_rows",
    "log_norm_stack",
    "op_norm_stack",
    "vec_norm_stack",
]

_KINDS = ("l1", "l2", "linf", "p")


class NormSpec:
    """A norm family choice, with cached P^{1/2} and P^{-1/2} for the
    weighted kind."""

    def __init__(self, kind: str, weight: np.ndarray | None = None):
        if kind not in _KINDS:
            raise ValueError(f"unknown norm kind {kind!r}")
        self.kind = kind
        self.weight = None
        self.sqrt_w = None
        self.inv_sqrt_w = None
        self.inv_w = None
        if kind == "p":
            if weight is None:
                raise ValueError("weighted norm requires a weight matrix")
            p = np.asarray(weight, dtype=float)
            check_finite(p)
            if p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise DimensionMismatchError("weight must be square")
            if np.abs(p - p.T).max() > 1e-10 * max(1.0, np.abs(p).max()):
                raise ValueError("weight must be symmetric to 1e-10")
            w, v = np.linalg.eigh((p + p.T) / 2.0)
            if w[0] <= 0.0:
                raise ValueError("weight must be positive definite")
            self.weight = p
            self.sqrt_w = (v * np.sqrt(w)) @ v.T
            self.inv_sqrt_w = (v / np.sqrt(w)) @ v.T
            self.inv_w = (v / w) @ v.T
            if np.abs(self.sqrt_w @ self.sqrt_w - p).max() > 1e-8 * max(1.0, np.abs(p).max()):
                raise ValueError("cached square root fails P^(1/2) P^(1/2) = P")
        elif weight is not None:
            raise ValueError(f"{kind} norm takes no weight")

    @classmethod
    def l1(cls) -> "NormSpec":
        return cls("l1")

    @classmethod
    def l2(cls) -> "NormSpec":
        return cls("l2")

    @classmethod
    def linf(cls) -> "NormSpec":
        return cls("linf")

    @classmethod
    def weighted(cls, p: np.ndarray) -> "NormSpec":
        return cls("p", p)

    def reference(self) -> "NormSpec":
        """Norm used on the reference space (weight dropped)."""
        return self if self.kind != "p" else NormSpec.l2()

    @property
    def dim(self) -> int | None:
        return None if self.weight is None else self.weight.shape[0]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.weight is not None:
            d["weight"] = self.weight.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NormSpec":
        w = d.get("weight")
        return cls(d["kind"], None if w is None else np.asarray(w, dtype=float))

    def __repr__(self) -> str:
        return f"NormSpec({self.kind!r})"


def _check_dim(x: np.ndarray, spec: NormSpec) -> None:
    if spec.dim is not None and x.shape[0] != spec.dim:
        raise DimensionMismatchError(
            f"vector of length {x.shape[0]} vs weight dimension {spec.dim}")


def vec_norm(x: np.ndarray, spec: NormSpec) -> float:
    x = np.asarray(x, dtype=float)
    check_finite(x)
    if spec.kind == "l1":
        return float(np.abs(x).sum())
    if spec.kind == "l2":
        return float(np.linalg.norm(x))
    if spec.kind == "linf":
        return float(np.abs(x).max()) if x.size else 0.0
    _check_dim(x, spec)
    return float(np.sqrt(max(x @ spec.weight @ x, 0.0)))


def op_norm(f: np.ndarray, spec: NormSpec) -> float:
    """Induced operator norm of F.

    Rectangular F maps R^cols -> R^rows; for the weighted kind the domain
    carries the weight only when cols matches the weight dimension,
    otherwise the domain is Euclidean (reference-space convention).
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    check_finite(f)
    if spec.kind == "l1":
        return float(np.abs(f).sum(axis=0).max())
    if spec.kind == "linf":
        return float(np.abs(f).sum(axis=1).max())
    if spec.kind == "p":
        _check_dim(f, spec)
        g = spec.sqrt_w @ f
        if f.shape[1] == spec.dim:
            g = g @ spec.inv_sqrt_w
    else:
        g = f
    return float(np.sqrt(max(np.linalg.eigvalsh(g.T @ g)[-1], 0.0)))


def log_norm(f: np.ndarray, spec: NormSpec) -> float:
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise DimensionMismatchError("logarithmic norm needs a square matrix")
    check_finite(f)
    if spec.kind == "l1":
        d = np.diag(f)
        col = np.abs(f).sum(axis=0) - np.abs(d)
        return float((d + col).max())
    if spec.kind == "linf":
        d = np.diag(f)
        row = np.abs(f).sum(axis=1) - np.abs(d)
        return float((d + row).max())
    if spec.kind == "p":
        _check_dim(f, spec)
        g = spec.sqrt_w @ f @ spec.inv_sqrt_w
    else:
        g = f
    return float(np.linalg.eigvalsh((g + g.T) / 2.0)[-1])


def dual_support(a: np.ndarray, spec: NormSpec) -> float:
    """Support function of the closed unit ball of `spec` at a, i.e. the
    dual norm of a."""
    a = np.asarray(a, dtype=float)
    check_finite(a)
    if spec.kind == "l1":
        return float(np.abs(a).max()) if a.size else 0.0
    if spec.kind == "l2":
        return float(np.linalg.norm(a))
    if spec.kind == "linf":
        return float(np.abs(a).sum())
    _check_dim(a, spec)
    return float(np.sqrt(max(a @ spec.inv_w @ a, 0.0)))


def support_rows(m: np.ndarray, spec: NormSpec) -> np.ndarray:
    """Row-wise unit-ball support values H_B(M)."""
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    check_finite(m)
    if spec.kind == "l1":
        return np.abs(m).max(axis=1)
    if spec.kind == "l2":
        return np.linalg.norm(m, axis=1)
    if spec.kind == "linf":
        return np.abs(m).sum(axis=1)
    if spec.dim is not None and m.shape[1] != spec.dim:
        raise DimensionMismatchError("row length vs weight dimension")
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", m, spec.inv_w, m), 0.0))


def log_norm_stack(fs: np.ndarray, spec: NormSpec) -> np.ndarray:
    """log_norm applied along the first axis of a (k, n, n) stack."""
    fs = np.asarray(fs, dtype=float)
    if spec.kind == "l1":
        d = np.diagonal(fs, axis1=1, axis2=2)
        col = np.abs(fs).sum(axis=1) - np.abs(d)
        return (d + col).max(axis=1)
    if spec.kind == "linf":
        d = np.diagonal(fs, axis1=1, axis2=2)
        row = np.abs(fs).sum(axis=2) - np.abs(d)
        return (d + row).max(axis=1)
    if spec.kind == "p":
        g = np.einsum("ij,tjk,kl->til", spec.sqrt_w, fs, spec.inv_sqrt_w)
    else:
        g = fs
    sym = (g + np.transpose(g, (0, 2, 1))) / 2.0
    return np.linalg.eigvalsh(sym)[:, -1]


def op_norm_stack(fs: np.ndarray, spec: NormSpec) -> np.ndarray:
    """op_norm applied along the first axis of a (k, n, m) stack."""
    fs = np.asarray(fs, dtype=float)
    if spec.kind == "l1":
        return np.abs(fs).sum(axis=1).max(axis=1)
    if spec.kind == "linf":
        return np.abs(fs).sum(axis=2).max(axis=1)
    if spec.kind == "p":
        g = np.einsum("ij,tjk->tik", spec.sqrt_w, fs)
        if fs.shape[2] == spec.dim:
            g = g @ spec.inv_sqrt_w
    else:
        g = fs
    gram = np.einsum("tij,tik->tjk", g, g)
    return np.sqrt(np.maximum(np.linalg.eigvalsh(gram)[:, -1], 0.0))


def vec_norm_stack(xs: np.ndarray, spec: NormSpec) -> np.ndarray:
    """vec_norm applied along the first axis of a (k, n) stack."""
    xs = np.asarray(xs, dtype=float)
    if spec.kind == "l1":
        return np.abs(xs).sum(axis=1)
    if spec.kind == "l2":
        return np.linalg.norm(xs, axis=1)
    if spec.kind == "linf":
        return np.abs(xs).max(axis=1)
    return np.sqrt(np.maximum(np.einsum("ti,ij,tj->t", xs, spec.weight, xs), 0.0))
