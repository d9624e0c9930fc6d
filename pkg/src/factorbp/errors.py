"""Exception types shared across the package."""


class FactorBPError(Exception):
    """Base class for all library errors."""


class ZeroMassError(FactorBPError):
    """Raised when a distribution's total mass vanishes (below 1e-300).

    Signals a vanished message, typically caused by disjoint supports or
    all mass being shifted off the grid.
    """


class DegenerateVarianceError(FactorBPError):
    """Raised when a distribution's variance is below 1e-12 (delta-like)."""


class NotATreeError(FactorBPError):
    """Raised when a tree-only operation receives a graph with a cycle."""


class BadPriorError(FactorBPError):
    """Raised when a prior targets a nonexistent variable."""


class AllVagueError(FactorBPError):
    """Raised when a Gaussian belief has zero precision after the final iteration."""


class NotConverged(FactorBPError):
    """Raised when a trace never satisfies the convergence tolerance."""


class InsufficientDepthError(FactorBPError):
    """Raised when a decay fit is attempted on too shallow a chain."""


class DecodeError(FactorBPError):
    """Raised when an image file cannot be decoded."""


class DimensionMismatchError(FactorBPError):
    """Raised when paired rasters disagree in shape."""


class ZeroDisparityError(FactorBPError):
    """Raised when converting a non-positive disparity to depth."""


class ConfigError(FactorBPError):
    """Raised when an experiment configuration fails validation."""
