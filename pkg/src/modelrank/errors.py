"""Exception and warning types shared across the package."""


class InvalidInput(ValueError):
    """Malformed arguments: bad shapes, non-finite entries, unknown families."""


class PreconditionViolated(ValueError):
    """A documented precondition on the inputs does not hold."""


class NotFound(LookupError):
    """A search (for example a stability onset) found nothing."""


class NumericalWarning(UserWarning):
    """Numerical result that may be unreliable.

    Carries the values that triggered it in ``values`` so callers can
    inspect or escalate.
    """

    def __init__(self, message, **values):
        super().__init__(message)
        self.values = values
