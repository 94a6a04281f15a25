"""Exception hierarchy shared by every module of the package."""


class ZeroNoiseError(Exception):
    """Base class for all errors raised by :mod:`zeronoise`."""


class ConfigError(ZeroNoiseError, ValueError):
    """Invalid parameter value or configuration entry."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CatalogError(ConfigError):
    """Unknown catalog map name."""


class DomainError(ZeroNoiseError, ValueError):
    """A point lies outside the domain of a map."""


class BoundaryAmbiguousError(ZeroNoiseError):
    """Jacobian requested at a branch boundary where one-sided derivatives differ."""

    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message)


class ConstructionError(ZeroNoiseError):
    """An object could not be built from otherwise well-typed parameters."""


class KernelError(ZeroNoiseError):
    """Rejection sampling of a noise offset failed."""


class DiscretizationError(ZeroNoiseError):
    """A transfer-operator sample could not be assigned to a grid cell."""


class ConvergenceError(ZeroNoiseError):
    """Power iteration did not reach the requested residual."""

    def __init__(self, message, residuals=None):
        self.residuals = list(residuals) if residuals is not None else []
        super().__init__(message)


class NumericalError(ZeroNoiseError):
    """Floating-point breakdown, e.g. a singular Jacobian along an orbit."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


class UnsupportedMapError(ZeroNoiseError):
    """The requested quantity needs data the map does not provide."""


class MetricError(ZeroNoiseError, ValueError):
    """Distance metric incompatible with the measures' grid."""
