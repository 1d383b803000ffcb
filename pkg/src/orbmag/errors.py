"""Exception types shared across the package."""


class OrbmagError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(OrbmagError):
    """Malformed or inconsistent run configuration."""


class ConvergenceFailure(OrbmagError):
    """An iterative solver ran out of iterations before reaching tolerance."""


class DegeneracyDetected(OrbmagError):
    """Two eigenvalues are closer than the degeneracy guard allows.

    The per-level formulas assume simple eigenvalues; the solvers refuse
    rather than guess a basis inside a near-degenerate cluster.
    """


class NotOrthogonal(OrbmagError):
    """A right-hand side violates a required orthogonality precondition."""


class InsufficientBoundStates(OrbmagError):
    """Fewer negative eigenvalues than the requested occupation number."""


class LevelTrackingLost(OrbmagError):
    """Eigenvector overlap between consecutive field steps dropped too low."""


class BracketFailure(OrbmagError):
    """Chemical-potential bisection could not bracket the target density."""


class NotInsulating(OrbmagError):
    """The target filling lands inside a band instead of a spectral gap."""


class TailTooLarge(OrbmagError):
    """The truncated part of a spectral series exceeds the error budget."""


class ContourTooClose(OrbmagError):
    """A quadrature contour passes too close to the spectrum."""


class DimensionTooLarge(OrbmagError):
    """Dense materialization requested above the allowed node count."""
