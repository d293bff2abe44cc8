"""Exception types shared across the package."""


class GaussPerimError(Exception):
    """Base class for all package errors."""


class ConfigError(GaussPerimError, ValueError):
    """Invalid spectrum, shape, grid or run configuration."""


class DegenerateGradientError(GaussPerimError, ArithmeticError):
    """The Cameron-Martin gradient vanishes (within threshold) at a query point."""


class NumericalFailure(GaussPerimError, ArithmeticError):
    """A Monte Carlo run produced non-finite values or rejected too many samples."""


class CoverageError(GaussPerimError, ValueError):
    """A level grid leaves too much of the distribution of u uncovered."""

    def __init__(self, message, outside_mass=None):
        super().__init__(message)
        self.outside_mass = outside_mass
