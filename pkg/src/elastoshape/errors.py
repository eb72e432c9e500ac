"""Exception hierarchy shared by all modules."""


class ElastoShapeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ElastoShapeError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class GeometryError(DomainError):
    """Degenerate or self-intersecting geometry."""


class SizeError(DomainError):
    """A requested construction exceeds the configured size guard."""


class WellPosednessError(ElastoShapeError):
    """The discrete problem would have a nontrivial kernel (no clamped part)."""


class SolverError(ElastoShapeError):
    """An iterative linear solver did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericError(ElastoShapeError):
    """An eigenvalue iteration stagnated or produced a non-finite value."""


class InfeasibleError(ElastoShapeError):
    """A shape parameter vector lies outside the admissible class."""


class InitializationError(ElastoShapeError):
    """The optimizer could not find a single feasible starting vertex."""


class ConfigError(ElastoShapeError):
    """Invalid or incomplete run configuration."""
