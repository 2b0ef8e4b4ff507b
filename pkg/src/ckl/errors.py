"""Exception types shared across the package."""


class CklError(Exception):
    """Base class for all package-specific failures."""


class ValidationError(CklError):
    """Bad user input: malformed specs, out-of-range parameters, missing files."""


class DomainError(ValidationError):
    """A chart-coordinate query lies outside the chart's domain."""


class DegenerateChartError(CklError):
    """The embedding Jacobian lost rank (metric determinant below the floor)."""


class TruncatedPathError(CklError):
    """A geodesic left its chart before reaching the requested arc length."""


class NumericsError(CklError):
    """A numerical method failed: overflow, ill-conditioning, low acceptance rate."""
