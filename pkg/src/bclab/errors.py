class ConfigurationError(ValueError):
    """Invalid numerical or physical configuration."""


class BoseCondensationError(ValueError):
    """Bosonic chemical potential at or above the lowest one-particle level."""


class ConvergenceError(RuntimeError):
    """An iterative solver or series did not converge within its budget."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ChartNotImplementedError(NotImplementedError):
    pass
