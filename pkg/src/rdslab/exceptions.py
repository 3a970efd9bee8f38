"""Exception types raised across rdslab."""


class ConfigError(ValueError):
    """Invalid parameter or experiment configuration."""


class NoDensityError(ValueError):
    """The kernel is singular (e.g. a delta kernel) and has no density."""


class StationaryNotConvergedError(RuntimeError):
    def __init__(self, message, residual, n_iter):
        super().__init__(f"{message} (residual={residual:.3e} after {n_iter} iterations)")
        self.residual = residual
        self.n_iter = n_iter


class LyapunovOverflowError(FloatingPointError):
    """Matrix product overflowed between two re-orthonormalizations."""


class InsufficientSamplesError(RuntimeError):
    """Too few samples to resolve the requested symbol cells."""
