"""Exception hierarchy shared by all ksfilter modules."""


class KSFilterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(KSFilterError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(KSFilterError, ArithmeticError):
    """A computation produced a non-finite value.

    ``where`` carries whatever locates the failure (a state, a path id).
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where!r})")
        self.where = where


class UnsupportedOrderError(KSFilterError):
    """Requested derivative or expansion order is beyond what is implemented."""


class UnboundedMomentError(KSFilterError):
    """Exponentiating an expansion whose exponential moments are infinite."""


class UnsupportedModelError(KSFilterError):
    """The model does not have the structure an operation requires."""


class GuardError(KSFilterError):
    """A partition violates the mesh-size guard in strict mode."""

    def __init__(self, verdict):
        super().__init__(
            f"mesh {verdict.delta:g} is not below delta0 = {verdict.delta0:g}"
        )
        self.verdict = verdict


class DegenerateNormalizationError(KSFilterError):
    """The estimated normalising constant is not positive."""
