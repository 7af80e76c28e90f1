"""Exception hierarchy.

Every numerical failure derives from :class:`SaddlefitError` so callers that
sweep over many inputs can catch one type and record the failure per row.
"""


class SaddlefitError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class DomainError(SaddlefitError, ValueError):
    """An argument lies outside the CGF or parameter domain."""

    code = "domain_error"


class DimensionMismatch(SaddlefitError, ValueError):
    code = "dimension_mismatch"


class DimensionTooLarge(SaddlefitError, ValueError):
    code = "dimension_too_large"


class NotConverged(SaddlefitError):
    """The saddlepoint iteration hit its iteration cap."""

    code = "not_converged"


class DomainExit(SaddlefitError):
    """No damped Newton step stayed admissible."""

    code = "domain_exit"


class SingularHessian(SaddlefitError):
    """K'' (or another matrix that must be positive definite) failed to factor."""

    code = "singular_hessian"


class NonFiniteHessian(SaddlefitError):
    code = "non_finite_hessian"


class NotAStationaryPoint(SaddlefitError):
    code = "not_a_stationary_point"


class IndefiniteHessian(SaddlefitError):
    """The log-likelihood Hessian is not negative definite or is ill-conditioned."""

    code = "indefinite_hessian"


class TooManyOccasions(SaddlefitError, ValueError):
    code = "too_many_occasions"


class OracleTooLarge(SaddlefitError, ValueError):
    code = "oracle_too_large"


class InsufficientPoints(SaddlefitError, ValueError):
    code = "insufficient_points"


class ConfigError(SaddlefitError, ValueError):
    code = "config_error"
