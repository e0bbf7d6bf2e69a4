"""Exception types shared across the package."""


class GeodesicLabError(Exception):
    """Base class for all package errors."""


class NonTermination(GeodesicLabError):
    """Fundamental-domain reduction exceeded its step budget."""


class NotHyperbolic(GeodesicLabError):
    """A group word does not define a hyperbolic element (|trace| <= 2)."""


class OutOfChart(GeodesicLabError):
    """A point lies outside the declared chart half-widths."""


class Singular(GeodesicLabError):
    """A closed-form factorization denominator is numerically zero."""


class SupportOverlap(GeodesicLabError):
    """Perturbation supports intersect; the parameter choice is invalid."""


class NoConvergence(GeodesicLabError):
    """An iterative leaf/slope computation failed to stabilize."""


class NumericalBlowup(GeodesicLabError):
    """Cocycle norms exceeded the overflow guard between orthonormalizations."""


class IntegratorDivergence(GeodesicLabError):
    """Newton iteration inside the midpoint integrator failed to converge."""


class BandMismatch(GeodesicLabError):
    """A point's interval coordinate is not in the expected band."""


class BadIndex(GeodesicLabError):
    """Band index out of range."""


class NotFound(GeodesicLabError):
    """A heteroclinic search exhausted its budget without a hit."""


class ConfigError(GeodesicLabError):
    """Configuration file is malformed or violates an ordering constraint."""
