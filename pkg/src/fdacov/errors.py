"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`FdacovError`.
Input problems additionally derive from :class:`InputError` and numerical
degeneracies from :class:`NumericalError`; the CLI maps these two families to
distinct exit codes.
"""


class FdacovError(Exception):
    """Base class for all package errors."""


class InputError(FdacovError, ValueError):
    """Malformed or out-of-domain user input."""


class NumericalError(FdacovError, ArithmeticError):
    """A computation is numerically degenerate for the given data."""


class ConfigError(FdacovError, ValueError):
    """Invalid run configuration."""


class DimensionMismatch(InputError):
    pass


class InvalidBandwidth(InputError):
    pass


class ParseError(InputError):
    pass


class RaggedPanel(InputError):
    pass


class DomainError(InputError):
    pass


class InconsistentZ(InputError):
    pass


class EvaluationOutsideDomain(InputError):
    pass


class QuadratureError(InputError):
    pass


class SingularSystem(NumericalError):
    """Local normal equations are (numerically) singular at the evaluation point."""


class RankDeficient(NumericalError):
    """Global polynomial design matrix does not have full column rank."""


class DegenerateSample(NumericalError):
    """A sample axis has zero spread, so no density bandwidth can be formed."""


class DegenerateFunctionals(NumericalError):
    """Pilot functionals violate the preconditions of a bandwidth formula."""


class AllSingular(NumericalError):
    """Every GCV candidate failed at too many data points."""
