"""Offline contraction certification and error-bound constants.

`certify` samples the admissible sets on a grid and records, per cell of a
partition of V:

  mu_e   max logarithmic norm of f_x over X x cell (must be < 0),
  eta_x  max ||f_x(x, vbar) - f_x(x_v(vbar), vbar)||,
  eta_v  max ||f_v(x, vhat) - f_v(x_v(vbar), vbar)|| over X x V x cell.

Grid sampling under-approximates the true suprema, so a multiplicative
safety inflation is applied: the etas grow by the factor and |mu_e| shrinks
by it. `error_gains` turns a certificate into the per-command constants
(Lambda_v, Lambda_w, Gamma_v, Gamma_w) that bound the steady-state offset
and the linear-prediction error; `intersample_terms` provides the extra
inflation that covers the gaps between constraint-check instants, and
`horizon` picks the finite check horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CertificationError, NotContractiveError
from .linalg import mat_exp
from .model import PlantModel, Polytope
from .norms import NormSpec, log_norm, log_norm_stack, op_norm, op_norm_stack, vec_norm

__all__ = [
    "Certificate",
    "ErrorGains",
    "IntersampleTerms",
    "certify",
    "error_gains",
    "intersample_terms",
    "horizon",
    "find_certificate",
    "save_certificates",
    "load_certificates",
]


@dataclass
class Certificate:
    """Region-wise contraction bounds, already safety-inflated."""

    region: Polytope
    mu_e: float
    eta_x: float
    eta_v: float
    grid_density: int
    safety_inflation: float

    @property
    def raw_mu_e(self) -> float:
        return self.mu_e * self.safety_inflation

    @property
    def raw_eta_x(self) -> float:
        return self.eta_x / self.safety_inflation

    @property
    def raw_eta_v(self) -> float:
        return self.eta_v / self.safety_inflation


@dataclass
class ErrorGains:
    """Steady-offset and prediction-error gain constants at one command."""

    lambda_v: float
    lambda_w: float
    gamma_v: float
    gamma_w: float
    mu_at_v: float


@dataclass
class IntersampleTerms:
    gamma_tilde_v: float
    gamma_tilde_x: float
    xi: float


def _stack_f_x(model: PlantModel, xs: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.array([model.f_x(x, v) for x in xs])


def certify(
    model: PlantModel,
    spec: NormSpec,
    partition: list[Polytope] | None = None,
    grid_density: int = 5,
    safety_inflation: float = 1.05,
) -> list[Certificate]:
    """Grid-sample the certificate bounds per cell of a partition of V.

    Raises CertificationError when any cell's inflated mu_e is >= 0.
    """
    if grid_density < 2:
        raise ValueError("grid density must be >= 2 points per dimension")
    if safety_inflation < 1.0:
        raise ValueError("safety inflation must be >= 1")
    cells = list(partition) if partition is not None else [model.V]
    x_grid = model.X.grid(grid_density)
    v_grid_all = model.V.grid(grid_density)
    fv_pairs = np.array([model.f_v(x, vh) for x in x_grid for vh in v_grid_all])
    if fv_pairs.ndim == 2:
        fv_pairs = fv_pairs[:, :, None]
    if np.ptp(fv_pairs, axis=0).max() == 0.0:
        fv_pairs = fv_pairs[:1]          # constant input Jacobian
    certs = []
    for cell in cells:
        cell_grid = cell.grid(grid_density)
        steady = np.array([model.x_v(vb) for vb in cell_grid])
        fx_ss = np.array([model.f_x(xs, vb) for xs, vb in zip(steady, cell_grid)])
        mu_e = -np.inf
        eta_x = 0.0
        for i, vb in enumerate(cell_grid):
            fx_stack = _stack_f_x(model, x_grid, vb)
            mu_e = max(mu_e, float(log_norm_stack(fx_stack, spec).max()))
            eta_x = max(eta_x, float(op_norm_stack(fx_stack - fx_ss[i], spec).max()))
        eta_v = 0.0
        for i in range(len(cell_grid)):
            fv_ss = np.atleast_2d(model.f_v(steady[i], cell_grid[i]))
            if fv_ss.shape[0] != model.n:
                fv_ss = fv_ss.reshape(model.n, model.n_v)
            eta_v = max(eta_v, float(op_norm_stack(fv_pairs - fv_ss, spec).max()))
        mu_infl = mu_e / safety_inflation
        if mu_infl >= 0.0:
            raise CertificationError(
                f"cell has inflated mu_e = {mu_infl:.6g} >= 0 under {spec.kind}")
        certs.append(Certificate(
            region=cell,
            mu_e=mu_infl,
            eta_x=eta_x * safety_inflation,
            eta_v=eta_v * safety_inflation,
            grid_density=grid_density,
            safety_inflation=safety_inflation,
        ))
    return certs


def error_gains(model: PlantModel, cert: Certificate, v_k: np.ndarray,
                spec: NormSpec) -> ErrorGains:
    """Gain constants at the command v_k (must lie in the certified cell)."""
    v_k = np.atleast_1d(np.asarray(v_k, dtype=float))
    xs = model.x_v(v_k)
    mu = log_norm(model.f_x(xs, v_k), spec)
    if mu >= 0.0:
        raise NotContractiveError(f"mu(f_x) = {mu:.6g} >= 0 at v = {v_k}")
    nfv = op_norm(model.f_v(xs, v_k), spec)
    return ErrorGains(
        lambda_v=-nfv / mu,
        lambda_w=-1.0 / mu,
        gamma_v=(cert.eta_x * nfv - cert.eta_v * mu) / (cert.mu_e * mu),
        gamma_w=cert.eta_x / (cert.mu_e * mu),
        mu_at_v=mu,
    )


def intersample_terms(
    model: PlantModel,
    cert: Certificate,
    v_k: np.ndarray,
    x_jump: np.ndarray,
    t: float,
    dt: float,
    spec: NormSpec,
) -> IntersampleTerms:
    """Inflation covering the interval [t, t + dt] between check instants."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v_k = np.atleast_1d(np.asarray(v_k, dtype=float))
    xs = model.x_v(v_k)
    a = model.f_x(xs, v_k)
    b = model.f_v(xs, v_k)
    mu = log_norm(a, spec)
    if mu >= 0.0:
        raise NotContractiveError(f"mu(f_x) = {mu:.6g} >= 0 at v = {v_k}")
    xi = (np.exp(dt * mu) - 1.0) / mu
    phi = mat_exp(a, t)
    gtv = op_norm(phi @ b, spec) * xi
    gtx = vec_norm(a @ phi @ np.asarray(x_jump, dtype=float), spec) * xi
    return IntersampleTerms(gamma_tilde_v=gtv, gamma_tilde_x=gtx, xi=xi)


def horizon(cert: Certificate, mu_at_v: float, dt_check: float,
            tol_t: float) -> tuple[float, int]:
    """Finite check horizon: smallest multiple T of dt_check with
    e^{mu T} <= tol_t; returns (T, N = T/dt_check)."""
    if not (0.0 < tol_t < 1.0):
        raise ValueError("tol_t must lie in (0, 1)")
    if mu_at_v >= 0.0:
        raise NotContractiveError("horizon needs mu < 0")
    if dt_check <= 0.0:
        raise ValueError("dt_check must be positive")
    t_min = np.log(tol_t) / mu_at_v
    n = int(np.ceil(t_min / dt_check - 1e-12))
    return n * dt_check, n


def find_certificate(certs: list[Certificate], v_k: np.ndarray,
                     tol: float = 1e-9) -> Certificate:
    for c in certs:
        if c.region.contains(v_k, tol):
            return c
    raise CertificationError(f"no certificate cell covers v = {np.asarray(v_k)}")


def save_certificates(path, certs: list[Certificate], metadata: dict | None = None) -> None:
    cells = []
    for c in certs:
        cell = {
            "mu_e": c.mu_e,
            "eta_x": c.eta_x,
            "eta_v": c.eta_v,
            "raw_mu_e": c.raw_mu_e,
            "raw_eta_x": c.raw_eta_x,
            "raw_eta_v": c.raw_eta_v,
            "grid_density": c.grid_density,
            "safety_inflation": c.safety_inflation,
        }
        if c.region.is_box:
            cell["lo"] = c.region.lo.tolist()
            cell["hi"] = c.region.hi.tolist()
        else:
            cell["M"] = c.region.M.tolist()
            cell["m"] = c.region.m.tolist()
        cells.append(cell)
    doc = {"version": 1, "cells": cells}
    if metadata:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc, indent=2))


def load_certificates(path) -> list[Certificate]:
    doc = json.loads(Path(path).read_text())
    certs = []
    for cell in doc["cells"]:
        if "lo" in cell:
            region = Polytope.box(cell["lo"], cell["hi"])
        else:
            region = Polytope(np.asarray(cell["M"]), np.asarray(cell["m"]))
        certs.append(Certificate(
            region=region,
            mu_e=float(cell["mu_e"]),
            eta_x=float(cell["eta_x"]),
            eta_v=float(cell["eta_v"]),
            grid_density=int(cell["grid_density"]),
            safety_inflation=float(cell["safety_inflation"]),
        ))
    return certs
