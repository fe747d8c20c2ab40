"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration (degrees, parameters, level ranges)."""


class InvalidCoefficient(ValueError):
    """A material coefficient is not symmetric positive definite."""


class SolverFailure(RuntimeError):
    """A factorization broke down; carries pivot diagnostics."""

    def __init__(self, message, min_pivot=None, equation=None, element=None):
        super().__init__(message)
        self.min_pivot = min_pivot
        self.equation = equation
        self.element = element
