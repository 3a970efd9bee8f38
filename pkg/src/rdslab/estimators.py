"""Estimator-style front ends (fit / transform / predict, get_params) over the functional core."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .entropy import block_entropies
from .lyapunov import oseledets_subspaces, qr_lyapunov, vector_growth
from .measures import (DEFAULT_BINS, BinnedMeasure, bin_index, build_ulam, stationarity_residual,
                       stationary_vector, wasserstein1)
from .validation import check_matrix_sequence


class UlamEstimator(BaseEstimator):
    """Stationary measure of a transition kernel by the Ulam discretization.

    ``fit`` takes the kernel itself; there is no sample data.
    """

    def __init__(self, n_bins=DEFAULT_BINS, tol=1e-12, max_iter=10**6, n_test_sets=64):
        self.n_bins = n_bins
        self.tol = tol
        self.max_iter = max_iter
        self.n_test_sets = n_test_sets

    def fit(self, kernel, y=None):
        self.operator_ = build_ulam(kernel, self.n_bins)
        self.measure_ = stationary_vector(self.operator_, self.tol, self.max_iter)
        self.residual_ = stationarity_residual(kernel, self.measure_, self.n_test_sets)
        return self

    def transform(self, X):
        """Stationary density at the points ``X``."""
        check_is_fitted(self, "measure_")
        return self.measure_.density(np.asarray(X, dtype=float))


class QRLyapunovEstimator(BaseEstimator):
    """Lyapunov spectrum of a product of matrices ``(n, k, k)``."""

    def __init__(self, reorth_period=1):
        self.reorth_period = reorth_period

    def fit(self, X, y=None):
        spec = qr_lyapunov(X, self.reorth_period)
        self.exponents_ = spec.exponents
        self.basis_ = spec.basis
        self.minus_inf_ = spec.minus_inf
        self.n_used_ = spec.n_used
        return self


class OseledetsEstimator(BaseEstimator):
    """Finite-n Oseledets filtration; ``predict`` places vectors in it.

    ``predict(Y)`` returns for each row ``y`` the largest ``h`` with ``y`` in
    ``Sigma_h``, i.e. the index of the exponent that governs its growth.
    """

    def __init__(self, tol=1e-8):
        self.tol = tol

    def fit(self, X, y=None):
        self.matrices_ = check_matrix_sequence(X)
        self.filtration_ = oseledets_subspaces(self.matrices_)
        self.exponents_ = np.array(self.filtration_.exponents)
        self.dims_ = list(self.filtration_.dims)
        return self

    def predict(self, Y):
        check_is_fitted(self, "filtration_")
        Y = check_array(Y)
        levels = np.ones(len(Y), dtype=int)
        for h in range(2, len(self.dims_)):
            B = self.filtration_.subspace(h)
            resid = Y - (Y @ B) @ B.T
            inside = np.linalg.norm(resid, axis=1) <= self.tol * np.linalg.norm(Y, axis=1)
            levels[inside] = h
        return levels

    def growth_rates(self, Y):
        """Brute-force ``(1/n) log ||phi_n y||`` for each row of ``Y``."""
        check_is_fitted(self, "filtration_")
        return np.array([vector_growth(self.matrices_, y) for y in check_array(Y)])


class BlockEntropyEstimator(BaseEstimator, TransformerMixin):
    """Plug-in entropy rate of symbol sequences, one sequence per row.

    The estimate is the minimum of ``H_n / n`` over the depths meeting the
    sample floor (``floor`` samples per observed block).
    """

    def __init__(self, n_max=14, floor=100):
        self.n_max = n_max
        self.floor = floor

    def fit(self, X, y=None):
        H, distinct = block_entropies(X, self.n_max, self.floor)
        if H.size == 0:
            raise ValueError("not enough rows to resolve a single symbol at the sample floor")
        self.block_entropies_ = H
        self.distinct_blocks_ = distinct
        self.curve_ = H / np.arange(1, H.size + 1)
        self.entropy_ = float(self.curve_.min())
        return self

    def transform(self, X):
        """Per-depth normalized entropies ``H_n / n`` of a new sample."""
        check_is_fitted(self, "entropy_")
        H, _ = block_entropies(X, self.n_max, self.floor)
        return H / np.arange(1, H.size + 1)


class EmpiricalMeasure(BaseEstimator, TransformerMixin):
    """Binned empirical law of samples on a one-dimensional space."""

    def __init__(self, space=None, n_bins=DEFAULT_BINS):
        self.space = space
        self.n_bins = n_bins

    def fit(self, X, y=None):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1))
        self.measure_ = BinnedMeasure.from_samples(self.space, X[:, 0], self.n_bins)
        self.weights_ = self.measure_.weights
        return self

    def transform(self, X):
        """Bin index of each sample."""
        check_is_fitted(self, "measure_")
        return bin_index(self.space, self.n_bins, np.asarray(X, dtype=float))

    def score(self, other):
        """Negative W1 distance to another binned measure (higher is closer)."""
        check_is_fitted(self, "measure_")
        return -wasserstein1(self.measure_, other)
