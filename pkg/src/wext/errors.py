"""Exception hierarchy shared by the wext modules."""


class WextError(Exception):
    """Base class for all library errors."""


class WeightSpecError(WextError, ValueError):
    """A weight specification could not be parsed or is not admissible.

    ``position`` is the 0-based character offset in the text that was
    being parsed, or ``None`` when the problem is not positional.
    """

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class WeightDomainError(WextError, ValueError):
    """A weight was evaluated outside of ``t > 0``."""


class QuadratureError(WextError, ArithmeticError):
    """An integral of the weight (or its reciprocal) is not finite."""


class ProfileConvergenceError(WextError, ArithmeticError):
    """Mesh refinement did not bring the profile error below tolerance."""


class ExtrapolationError(WextError, ValueError):
    """A symbol value beyond the tabulated range was requested."""


class TruncationError(WextError, ArithmeticError):
    """A truncated sum or integral has a tail above the allowed size."""


class DegenerateFieldError(WextError, ValueError):
    """Angle diagnostics are undefined (e.g. every point masked)."""


class MonotonicityError(WextError, ValueError):
    """The field violates the standing hypothesis d U / d x2 > 0."""

    code = "NON_MONOTONE_X2"
