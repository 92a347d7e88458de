"""Exception types shared across the library."""


class RgError(Exception):
    """Base class for all library-specific failures."""


class DimensionMismatchError(RgError):
    pass


class SingularMatrixError(RgError):
    pass


class NoConvergenceError(RgError):
    pass


class NotStabilizableError(RgError):
    pass


class AdmissibleSetError(RgError):
    """A point lies outside the relevant admissible polytope."""


class CertificationError(RgError):
    """The contraction certificate could not be established (mu_e >= 0)."""


class NotContractiveError(RgError):
    """The local Jacobian has a nonnegative logarithmic norm."""


class MaxIterationsError(RgError):
    """Iterative solver exhausted its iteration budget (solver failure,
    distinct from a well-posed infeasibility verdict)."""


class TooLargeError(RgError):
    """Problem exceeds a brute-force enumeration bound."""


class NotAffineError(RgError):
    pass


class NonFiniteError(RgError):
    """A state or matrix entry left the finite range."""
