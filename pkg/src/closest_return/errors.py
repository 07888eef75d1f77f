"""Exception types raised across the package."""


class DomainError(ValueError):
    """A point lies outside the map's domain."""


class BreakPointError(ValueError):
    """Derivative requested at a point where the map is not differentiable."""


class BufferExhaustedError(IndexError):
    """An exact dyadic state has too few bits for the requested iterate."""


class DegenerateOrbitError(RuntimeError):
    """The orbit is trapped (e.g. on a fixed point) and carries no statistics."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class EmptyTowerError(RuntimeError):
    """No return branch was found up to the requested return time."""


class GapError(ValueError):
    """An induced iterate fell outside every tower branch."""


class InsufficientDataError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


class DegenerateError(ValueError):
    """A construction collapsed (zero normalizer, degenerate mollifier, ...)."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
