"""Exception types shared across the package."""

from __future__ import annotations


class PreconditionError(ValueError):
    """An operation was called outside its admissible parameter range."""


class DomainError(PreconditionError):
    """A motility was evaluated outside the range where it is defined."""


class SolverError(RuntimeError):
    """An iterative linear solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class ConfigError(ValueError):
    """An experiment configuration could not be parsed or validated.

    ``where`` names the offending field (dotted path) or the line/column of a
    syntax error, so CLI users can find the problem without a traceback.
    """

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
