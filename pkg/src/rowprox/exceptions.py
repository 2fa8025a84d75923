"""Exception types raised by rowprox."""


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class NotPositiveDefiniteError(ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class RankDeficientBlockError(ValueError):
    """An undamped block pseudoinverse was requested on a rank-deficient block."""


class UnsupportedConfigurationError(ValueError):
    """A combination of options that the method does not support."""


class DivergenceError(FloatingPointError):
    """A non-finite iterate was produced.

    Attributes
    ----------
    step : int
        Global (0-based) step index at which the non-finite value appeared.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite iterate produced at step {step}")
