"""Exception hierarchy shared by all modules."""


class StealShareError(Exception):
    """Base class for every error raised by this package."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidParameterError(StealShareError, ValueError):
    code = "invalid-parameter"


class UnsupportedShapeError(InvalidParameterError):
    """Requested moments cannot be produced by the distribution family."""

    code = "unsupported-shape"


class NumericError(StealShareError, ArithmeticError):
    code = "numeric"


class DecompositionError(NumericError):
    """The busy-period phase generator has no unique stationary vector."""

    code = "decomposition"


class StabilityError(StealShareError, ValueError):
    code = "stability"


class ConvergenceError(NumericError):
    code = "convergence"

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def to_dict(self):
        d = super().to_dict()
        d.update(residual=self.residual, iterations=self.iterations)
        return d


class BracketError(StealShareError, ValueError):
    """A bisection bracket does not contain a sign change."""

    code = "domain"


class ApplicabilityError(StealShareError, ValueError):
    """A bound was requested for a distribution it does not cover."""

    code = "applicability"


class InsufficientDataError(StealShareError, RuntimeError):
    code = "insufficient-data"
