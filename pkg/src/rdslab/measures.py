"""Binned measures, Ulam transfer matrices, stationary vectors and W1 distances.

Ulam rows for the uniform-ball kernels are integrated exactly: along a
sub-cell where the ball center moves linearly, the mass a bin receives is a
piecewise-linear function of the center, and its average has a closed form.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, NoDensityError, StationaryNotConvergedError
from .kernels import AdditiveKernel, DeltaKernel, ParametricKernel
from .skew import stream_rng
from .validation import check_count, check_probability_vector

DEFAULT_BINS = 2000
DEFAULT_SUBCELLS = 32


@dataclass(frozen=True, eq=False)
class BinnedMeasure:
    """Probability vector on ``n_bins`` uniform bins of a one-dimensional space."""

    space: object
    weights: np.ndarray

    def __post_init__(self):
        if self.space.dim != 1:
            raise ConfigError("binned measures live on one-dimensional spaces")
        w = check_probability_vector(self.weights)
        object.__setattr__(self, "weights", w)

    @property
    def n_bins(self):
        return self.weights.size

    @property
    def width(self):
        return (self.space.upper - self.space.lower) / self.n_bins

    @property
    def edges(self):
        return self.space.lower + self.width * np.arange(self.n_bins + 1)

    @property
    def centers(self):
        return self.space.lower + self.width * (np.arange(self.n_bins) + 0.5)

    def density(self, x):
        idx = bin_index(self.space, self.n_bins, x)
        return self.weights[idx] / self.width

    def mass(self, lo, hi):
        """Mass of ``[lo, hi]`` assuming uniform density inside every bin."""
        e = self.edges
        cover = np.maximum(0.0, np.minimum(hi, e[1:]) - np.maximum(lo, e[:-1]))
        return float(np.sum(self.weights * cover / self.width))

    @classmethod
    def lebesgue(cls, space, n_bins=DEFAULT_BINS):
        return cls(space, np.full(n_bins, 1.0 / n_bins))

    @classmethod
    def dirac(cls, space, n_bins=DEFAULT_BINS, point=0.0):
        w = np.zeros(n_bins)
        w[bin_index(space, n_bins, point)] = 1.0
        return cls(space, w)

    @classmethod
    def from_samples(cls, space, samples, n_bins=DEFAULT_BINS):
        idx = bin_index(space, n_bins, np.ravel(samples))
        counts = np.bincount(idx, minlength=n_bins).astype(float)
        return cls(space, counts / counts.sum())

    def sample(self, rng, size):
        """Draws from the piecewise-uniform density."""
        idx = rng.choice(self.n_bins, size=size, p=self.weights)
        return self.space.lower + self.width * (idx + rng.random(size))


def bin_index(space, n_bins, x):
    lo, hi = space.lower, space.upper
    u = (np.asarray(x, dtype=float) - lo) / (hi - lo)
    if space.periodic:
        u = u - np.floor(u)
    return np.clip((u * n_bins).astype(np.int64), 0, n_bins - 1)


@dataclass(frozen=True, eq=False)
class UlamOperator:
    """Row-stochastic matrix ``P[i, j]`` = mean over bin i of p(bin j | x)."""

    matrix: sp.csr_matrix
    kernel: object
    space: object
    pushforward: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def n_bins(self):
        return self.matrix.shape[0]

    def apply(self, weights):
        """One step of the kernel acting on a measure (row vector times P)."""
        return self.matrix.T @ weights


def _ramp_average(u0, u1, a, b):
    """Mean over [u0, u1] of r(t) = clip(t - a, 0, b - a); requires u1 > u0.

    Summed piece by piece (r is linear on each piece) so no large terms cancel.
    """
    span = u1 - u0
    total = np.zeros(np.broadcast(u0, a).shape)
    cuts = [u0, np.clip(a, u0, u1), np.clip(b, u0, u1), u1]
    for p0, p1 in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (p0 + p1)
        total = total + (p1 - p0) * np.clip(mid - a, 0.0, b - a)
    return total / span


def _window_average(c0, c1, a, b, eps):
    """Mean over centers c in [c0, c1] of |[a, b] intersect [c - eps, c + eps]|."""
    span = c1 - c0
    flat = span < 1e-13
    c0s = np.where(flat, c0 - 0.5, c0)
    c1s = np.where(flat, c0 + 0.5, c1)
    avg = _ramp_average(c0s + eps, c1s + eps, a, b) - _ramp_average(c0s - eps, c1s - eps, a, b)
    point = np.maximum(0.0, np.minimum(b, c0 + eps) - np.maximum(a, c0 - eps))
    return np.where(flat, point, avg)


def _segment_fraction(c0, c1, a, b):
    """Fraction of the segment [c0, c1] lying in [a, b]; point-mass limit when c0 == c1."""
    span = c1 - c0
    flat = span < 1e-13
    frac = np.maximum(0.0, np.minimum(b, c1) - np.maximum(a, c0)) / np.where(flat, 1.0, span)
    point = ((c0 >= a) & (c0 < b)).astype(float)
    return np.where(flat, point, frac)


def _center_segments(center, space, n_bins, sub_cells):
    """Endpoints (c0 <= c1) of the linearized center image of every sub-cell, lifted."""
    lo, hi = space.lower, space.upper
    h = (hi - lo) / (n_bins * sub_cells)
    x = lo + h * np.arange(n_bins * sub_cells + 1)
    y = np.asarray(center(x), dtype=float)
    y0, y1 = y[:-1], y[1:]
    if space.periodic:
        y1 = y0 + space.displacement(y0, y1)
    c0 = np.minimum(y0, y1).reshape(n_bins, sub_cells)
    c1 = np.maximum(y0, y1).reshape(n_bins, sub_cells)
    return c0, c1


def _segment_rows(c0, c1, space, n_bins, eps, pushforward):
    """COO triplets of the row-averaged transition masses for segment endpoints c0, c1."""
    lo, hi = space.lower, space.upper
    width = (hi - lo) / n_bins
    n_rows, m = c0.shape
    first = np.floor((c0.min(axis=1) - eps - lo) / width).astype(np.int64) - 1
    last = np.floor((c1.max(axis=1) + eps - lo) / width).astype(np.int64) + 1
    K = int((last - first).max()) + 1
    jj = first[:, None] + np.arange(K)[None, :]          # lifted bin indices
    a = lo + jj * width
    b = a + width
    vals = np.zeros((n_rows, K))
    for s in range(m):
        cs0 = c0[:, s][:, None]
        cs1 = c1[:, s][:, None]
        if pushforward:
            vals += _segment_fraction(cs0, cs1, a, b)
        else:
            vals += _window_average(cs0, cs1, a, b, eps) / (2 * eps)
    vals /= m
    rows = np.repeat(np.arange(n_rows), K)
    cols = jj.ravel()
    if space.periodic:
        cols = np.mod(cols, n_bins)
    else:
        inside = (cols >= 0) & (cols < n_bins)
        rows, cols, vals = rows[inside], cols[inside], vals.ravel()[inside]
        return rows, cols, vals
    return rows, cols, vals.ravel()


def _parametric_rows(kernel, n_bins, quad_order=8):
    space = kernel.space
    width = (space.upper - space.lower) / n_bins
    nodes, wts = np.polynomial.legendre.leggauss(quad_order)
    edges = space.lower + width * np.arange(n_bins + 1)
    x = (edges[:-1, None] + 0.5 * width * (nodes[None, :] + 1.0))
    image_lo = np.asarray(kernel.family.func(-kernel.eps, x))
    image_hi = np.asarray(kernel.family.func(kernel.eps, x))
    spread = np.abs(image_hi - image_lo).max() + 2 * width
    center = np.asarray(kernel.family.func(0.0, x))
    K = int(np.ceil(spread / width)) + 3
    first = np.floor((center.min(axis=1) - spread / 2 - space.lower) / width).astype(np.int64) - 1
    jj = first[:, None] + np.arange(K)[None, :]
    a = space.lower + width * (first[:, None] + np.arange(K + 1)[None, :])
    vals = np.zeros((n_bins, K))
    for q in range(quad_order):
        # bin edges sit in lift coordinates next to the center, so no wrap shifts are needed
        xq = np.repeat(x[:, q][:, None], K + 1, axis=1)
        w, _ = kernel._invert(xq, a - center[:, q][:, None])
        vals += 0.5 * wts[q] * np.abs(np.diff(w, axis=1)) / (2 * kernel.eps)
    rows = np.repeat(np.arange(n_bins), K)
    cols = jj.ravel()
    if space.periodic:
        cols = np.mod(cols, n_bins)
        return rows, cols, vals.ravel()
    inside = (cols >= 0) & (cols < n_bins)
    return rows[inside], cols[inside], vals.ravel()[inside]


def kernel_rows(kernel, n_bins, sub_cells=None):
    """Sparse matrix of bin-averaged transition masses (rows not renormalized).

    Returns ``(matrix, pushforward_flag, mode)``.
    """
    space = kernel.space
    if space.dim != 1:
        raise ConfigError("Ulam discretization is implemented on one-dimensional spaces")
    if isinstance(kernel, ParametricKernel):
        rows, cols, vals = _parametric_rows(kernel, n_bins)
        mode, push = "gauss-legendre", False
    elif isinstance(kernel, (AdditiveKernel, DeltaKernel)):
        push = isinstance(kernel, DeltaKernel)
        center = kernel.center
        if sub_cells is None:
            sub_cells = 1 if center.piecewise_affine else DEFAULT_SUBCELLS
        c0, c1 = _center_segments(center, space, n_bins, sub_cells)
        rows, cols, vals = _segment_rows(c0, c1, space, n_bins, kernel.eps, push)
        mode = "pushforward" if push else ("exact" if sub_cells == 1 else f"exact/{sub_cells}-linearized")
    else:
        raise NoDensityError(f"no Ulam discretization for kernel {kernel.variant!r}")
    keep = vals > 0
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_bins, n_bins))
    P.sum_duplicates()
    return P, push, mode


def build_ulam(kernel, n_bins=DEFAULT_BINS, sub_cells=None):
    """Ulam discretization of ``kernel`` on ``n_bins`` uniform bins.

    Delta kernels have no density; their rows are the pushforward of each bin
    under the map (``UlamOperator.pushforward`` is set).
    """
    n_bins = check_count(n_bins, name="n_bins", minimum=2)
    P, push, mode = kernel_rows(kernel, n_bins, sub_cells)
    row_sums = np.asarray(P.sum(axis=1)).ravel()
    drift = float(np.max(np.abs(row_sums - 1.0)))
    # rows sum to 1 analytically; remove accumulated rounding
    P = sp.csr_matrix(sp.diags(1.0 / row_sums) @ P)
    return UlamOperator(P, kernel, kernel.space, push, {"mode": mode, "row_sum_drift": drift})


def stationary_vector(op, tol=1e-12, max_iter=10**6, init=None):
    """Left fixed vector of the Ulam matrix by power iteration from the uniform vector.

    With several closed classes the returned vector is the limit reached from
    uniform initial mass. Raises :class:`StationaryNotConvergedError` otherwise.
    """
    n = op.n_bins
    mu = np.full(n, 1.0 / n) if init is None else np.asarray(init, dtype=float)
    PT = op.matrix.T.tocsr()
    residual = np.inf
    for it in range(max_iter + 1):
        nxt = PT @ mu
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - mu).sum())
        if residual < tol:
            return BinnedMeasure(op.space, nxt)
        mu = nxt
    raise StationaryNotConvergedError("power iteration did not converge", residual, max_iter)


def pushed_measure(kernel, mu, method="exact", quad_order=16):
    """Binned law of ``x_1`` when ``x_0 ~ mu``: the vector ``j -> int p(bin j | x) dmu(x)``.

    ``method="exact"`` integrates the kernel masses in closed form bin by bin;
    ``method="quadrature"`` uses Gauss-Legendre nodes in every bin instead.
    """
    n = mu.n_bins
    if method == "exact":
        P, _, _ = kernel_rows(kernel, n)
        return P.T @ mu.weights
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    nodes, wts = np.polynomial.legendre.leggauss(quad_order)
    edges = mu.edges
    out = np.zeros(n)
    for q in range(quad_order):
        x = edges[:-1] + 0.5 * mu.width * (nodes[q] + 1.0)
        for j in range(n):
            m = kernel.mass(x, edges[j], edges[j + 1])
            out[j] += 0.5 * wts[q] * np.dot(mu.weights, m)
    return out


def stationarity_residual(kernel, mu, n_test_sets=64, seed=0, test_sets=None, method="exact"):
    """max over test sets A of |mu(A) - int p(A|x) dmu(x)|.

    Test sets are unions of bins: ``test_sets`` (boolean masks or index arrays)
    when given, otherwise ``n_test_sets`` random unions plus the set where
    ``mu`` exceeds its image, at which the maximum over all unions is attained.
    """
    image = pushed_measure(kernel, mu, method=method)
    diff = mu.weights - image
    masks = []
    if test_sets is not None:
        for A in test_sets:
            A = np.asarray(A)
            if A.dtype != bool:
                mask = np.zeros(mu.n_bins, dtype=bool)
                mask[A] = True
                A = mask
            masks.append(A)
    else:
        rng = stream_rng(seed, 0)
        masks = list(rng.random((n_test_sets, mu.n_bins)) < 0.5)
        masks.append(diff > 0)
    return max(abs(float(diff[A].sum())) for A in masks)


def wasserstein1(mu, nu):
    """W1 between binned measures, each bin's mass placed at its center.

    On the circle the optimal-rotation CDF formula is used:
    ``W1 = min_c int |F - G - c|``, attained at a weighted median of ``F - G``.
    """
    if mu.space != nu.space or mu.n_bins != nu.n_bins:
        raise ValueError("measures must share the same partition")
    D = np.cumsum(mu.weights - nu.weights)
    h = mu.width
    if not mu.space.periodic:
        return float(h * np.abs(D[:-1]).sum())
    # gaps between consecutive centers all equal h, the wrap gap included
    c = np.median(D)
    return float(h * np.abs(D - c).sum())


def wasserstein1_circle(mu, nu):
    if not mu.space.periodic:
        raise ValueError("wasserstein1_circle needs measures on the circle")
    return wasserstein1(mu, nu)


@dataclass(frozen=True)
class ZeroNoiseRow:
    eps: float
    w1: float
    mass_in_window: float


@dataclass
class ZeroNoiseTable:
    rows: list
    monotone: bool
    candidate: str = ""
    measures: list = field(default_factory=list, repr=False)

    def distances(self):
        return np.array([r.w1 for r in self.rows])


def window_mass(mu, candidate, radius):
    """Mass of ``mu`` within ``radius`` of the support of ``candidate``."""
    support = candidate.centers[candidate.weights > 0]
    d = np.min(mu.space.distance(mu.centers[:, None], support[None, :]), axis=1)
    return float(mu.weights[d <= radius + 1e-12].sum())


def zero_noise_study(kernel_factory, eps_schedule, candidate, n_bins=None, tol=1e-12,
                     max_iter=10**6, candidate_name=""):
    """Stationary vectors along a decreasing noise schedule and their W1 to ``candidate``."""
    eps_schedule = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ConfigError("eps_schedule must be strictly decreasing")
    n_bins = candidate.n_bins if n_bins is None else n_bins
    rows, measures = [], []
    for eps in eps_schedule:
        op = build_ulam(kernel_factory(eps), n_bins)
        mu = stationary_vector(op, tol=tol, max_iter=max_iter)
        radius = eps + mu.width
        rows.append(ZeroNoiseRow(eps, wasserstein1(mu, candidate), window_mass(mu, candidate, radius)))
        measures.append(mu)
    d = [r.w1 for r in rows]
    monotone = all(b < a for a, b in zip(d, d[1:]))
    return ZeroNoiseTable(rows, monotone, candidate_name, measures)
