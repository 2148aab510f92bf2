"""Exception types shared across the package."""


class ThrustAllocError(Exception):
    """Base class for all package errors."""


class ConfigError(ThrustAllocError):
    """Invalid vessel/scenario configuration (syntax or schema)."""


class GeometryError(ThrustAllocError):
    """Thruster geometry cannot realize all commanded degrees of freedom."""


class SimulationError(ThrustAllocError):
    """Numeric failure while stepping the reference filter."""
