"""Exception types shared across the package."""


class WqbemError(Exception):
    """Base class for all package errors."""


class DomainError(WqbemError, ValueError):
    """An evaluation point lies outside the parametric domain."""


class ConstructionError(WqbemError, ValueError):
    """Invalid input while building a basis, node vector or rule family."""


class GeometryError(WqbemError, ValueError):
    """Degenerate or insufficiently smooth boundary geometry."""


class SolverError(WqbemError, RuntimeError):
    """The dense linear solve failed (singular or non-finite system)."""


class MetricError(WqbemError, ValueError):
    """An error metric is undefined (e.g. zero denominator)."""


class UsageError(WqbemError, ValueError):
    """Mismatched objects passed to an operation (wrong provenance)."""
