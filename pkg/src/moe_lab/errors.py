class MoeLabError(Exception):
    """Base class for library errors."""


class DomainError(MoeLabError, ValueError):
    """A parameter lies outside its mathematical domain (e.g. nu <= 0)."""


class ShapeError(MoeLabError, ValueError):
    pass


class ParameterError(MoeLabError, ValueError):
    pass


class FitError(MoeLabError, ValueError):
    """Too few usable points to fit a slope."""


class InitializationError(MoeLabError):
    """Log-likelihood is not finite at the starting parameters."""


class DiagnosticError(MoeLabError):
    pass
