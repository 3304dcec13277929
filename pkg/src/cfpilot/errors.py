class InvalidConfig(ValueError):
    """A scenario or layout parameter is out of range.

    ``field`` names the offending parameter so callers can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidInput(ValueError):
    pass


class InvalidState(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


class RankDeficientError(ArithmeticError):
    """Gram-Schmidt met a pivot below tolerance; redraw the perturbation."""


class InsufficientSamplesError(RuntimeError):
    """Monte Carlo estimate is not usable at this sample size."""


class InfeasibleError(RuntimeError):
    pass
