"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach its required tolerance.

    Carries the best residual seen so the caller can decide whether the
    partial result is usable.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
