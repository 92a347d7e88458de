"""Shared independent oracles and generators for the test suite."""

import numpy as np

from rgov.qp import QpProblem


def taylor_expm(a, t, order=30, levels=40):
    """Matrix exponential by scaling far below unit norm, a high-order
    Taylor sum, and squaring back; independent of the library kernel."""
    x = np.asarray(a, dtype=float) * t
    s = 0
    while np.abs(x).sum(axis=1).max(initial=0.0) > 1e-3 and s < levels:
        x = x / 2.0
        s += 1
    term = np.eye(x.shape[0])
    acc = term.copy()
    for k in range(1, order + 1):
        term = term @ x / k
        acc = acc + term
    for _ in range(s):
        acc = acc @ acc
    return acc


def random_qp_problem(rng, feasible_bias=True):
    """Random strictly convex QP with up to 5 variables, 10 constraints."""
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 11))
    l = rng.normal(size=(n, n))
    h = l @ l.T + 1e-3 * np.eye(n)
    g = rng.normal(size=n)
    a = rng.normal(size=(m, n))
    if feasible_bias:
        z_feas = rng.normal(size=n)
        b = a @ z_feas + rng.uniform(0.0, 2.0, size=m)
    else:
        b = rng.normal(size=m)
    return QpProblem(h, g, a, b)
