"""Exception types shared across the package."""


class NormgeoError(Exception):
    """Base class for all package-specific errors."""


class InputError(NormgeoError):
    """Invalid argument: bad dimension, malformed config, out-of-range value."""


class UnsupportedNormError(InputError):
    """Requested quantity has no closed form for this norm kind."""


class DimensionTooLargeError(InputError):
    """Brute-force routine called above its supported ambient dimension."""


class NearSingularError(NormgeoError):
    """Covariance matrix has an eigenvalue at or below the singularity floor."""


class DegenerateSetError(NormgeoError):
    """Rejection sampler accepted nothing within its proposal budget."""

    def __init__(self, msg, n_proposed=0):
        super().__init__(msg)
        self.n_proposed = n_proposed


class SolverError(NormgeoError):
    """Iterative solver diverged or stalled; carries the objective trace."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = list(trace) if trace is not None else []


class BracketError(NormgeoError):
    """Threshold search range does not straddle the target value."""
