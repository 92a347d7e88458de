"""Reference governor for disturbed nonlinear systems via logarithmic-norm
error bounds and quadratic programming.

The package certifies contraction offline (`bounds`), tightens polyhedral
constraints into linear inequalities per sample, and solves a small convex
QP (`qp`) to filter reference commands (`governor`), with a closed-loop
simulator (`sim`) and CLI (`harness`) reproducing the built-in case studies
in `model`.
"""

from .bounds import (
    Certificate,
    ErrorGains,
    IntersampleTerms,
    certify,
    error_gains,
    horizon,
    intersample_terms,
)
from .governor import Governor, GovernorConfig, MoveSet, move_set, v1_prime
from .model import (
    DisturbanceSpec,
    PlantModel,
    Polytope,
    default_norm_spec,
    example1,
    linearize,
    spacecraft,
)
from .norms import NormSpec, dual_support, log_norm, op_norm, support_rows, vec_norm
from .qp import QpProblem, QpSolution, oracle_qp, solve_qp
from .sim import (
    AuditReport,
    Scenario,
    Trajectory,
    audit,
    integrate,
    run_closed_loop,
    sample_disturbance,
)

__version__ = "0.1.0"
