"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError


def check_epsilon(eps, *, upper=None, name="eps", allow_zero=False):
    """Return ``eps`` as a float, raising :class:`ConfigError` when out of range."""
    if isinstance(eps, bool) or not isinstance(eps, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {eps!r}")
    eps = float(eps)
    if not np.isfinite(eps):
        raise ConfigError(f"{name} must be finite, got {eps}")
    if eps < 0 or (eps == 0 and not allow_zero):
        raise ConfigError(f"{name} must be positive, got {eps}")
    if upper is not None and eps >= upper:
        raise ConfigError(f"{name} must be < {upper}, got {eps}")
    return eps


def check_count(n, *, name="n", minimum=0):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {n!r}")
    if n < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {n}")
    return int(n)


def check_seed(seed):
    if seed is None:
        raise ConfigError("a seed is required; rdslab never draws unseeded noise")
    return check_count(seed, name="seed")


def check_matrix_sequence(X, *, name="X"):
    """Validate a sequence of square matrices, returning shape ``(n, k, k)``.

    A 1-D input is read as a sequence of scalar (1x1) factors.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None, None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError(f"{name} must have shape (n, k, k), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_symbols(X):
    """Symbol matrix ``(n_samples, depth)`` of non-negative integer labels."""
    X = check_array(X, dtype=None, ensure_2d=True)
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.equal(np.mod(X, 1), 0)):
            raise ValueError("symbols must be integer labels")
        X = X.astype(np.int64)
    if X.min() < 0:
        raise ValueError("symbols must be non-negative")
    return X


def check_probability_vector(w, *, atol=1e-12, name="weights"):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(w < 0):
        raise ValueError(f"{name} must be non-negative")
    total = w.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {total!r})")
    return w
