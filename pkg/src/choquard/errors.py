"""Exception hierarchy shared by all modules."""


class ChoquardError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ChoquardError, ValueError):
    """Parameters outside the admissible range (dimension, mu, geometry)."""


class DimensionError(ChoquardError, ValueError):
    """Fields or plans that live on different grids."""


class ConvergenceError(ChoquardError, RuntimeError):
    """An iterative routine or a two-route cross-check failed."""


class ResourceError(ChoquardError, MemoryError):
    """A computation would exceed a configured size cap."""


class DegenerateInput(ChoquardError, ValueError):
    """The zero field (or a field with a vanishing denominator) was supplied."""


class RayUnbounded(ChoquardError, ValueError):
    """The energy along the ray has no positive interior maximum (Q <= 0)."""


class ResolutionError(ChoquardError, ValueError):
    """A bubble is narrower than the grid can represent."""


class FitError(ChoquardError, ValueError):
    """A rate fit received nonpositive deficits or too few points."""


class NotFound(ChoquardError, LookupError):
    """No grid value satisfies the requested inequality."""


class IllConditioned(ChoquardError, ArithmeticError):
    """A Gram matrix is too close to singular."""


class ConfigError(ChoquardError, ValueError):
    """Invalid experiment configuration."""
