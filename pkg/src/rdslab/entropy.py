"""Partition entropy, random block entropy and the entropy-versus-exponents check.

All logarithms are natural (nats) so entropies compare directly with
Lyapunov exponents.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InsufficientSamplesError
from .lyapunov import random_met
from .skew import NoiseSequence, stream_rng
from .validation import check_count, check_seed, check_symbols

SAMPLE_FLOOR = 100


class Partition:
    """Product partition of a space into axis-aligned cells.

    ``edges[a]`` are the sorted cut points along axis ``a`` including both
    ends of the domain; the cells are the products of consecutive intervals.
    Labels run over the cells in row-major order.
    """

    def __init__(self, space, edges, name=None):
        if len(edges) != space.dim:
            raise ValueError("one edge list per dimension is required")
        clean = []
        for a, e in enumerate(edges):
            e = np.unique(np.asarray(e, dtype=float))
            lo, hi = space.bounds[a]
            if e.size < 2 or e[0] != lo or e[-1] != hi:
                raise ValueError(f"edges along axis {a} must start at {lo} and end at {hi}")
            clean.append(e)
        self.space = space
        self.edges = tuple(clean)
        self.name = name or "x".join(str(len(e) - 1) for e in clean)

    @classmethod
    def dyadic(cls, space, level, axes=None):
        """``2**level`` equal cells along each axis in ``axes`` (default: all)."""
        axes = range(space.dim) if axes is None else axes
        edges = []
        for a, (lo, hi) in enumerate(space.bounds):
            k = 2 ** level if a in axes else 1
            edges.append(np.linspace(lo, hi, k + 1))
        suffix = "" if space.dim == 1 else "_axes" + "".join(map(str, axes))
        return cls(space, edges, f"dyadic{level}{suffix}")

    @property
    def shape(self):
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    @property
    def labels(self):
        return np.arange(self.n_cells)

    def cell_bounds(self, label):
        idx = np.unravel_index(label, self.shape)
        return tuple((self.edges[a][i], self.edges[a][i + 1]) for a, i in enumerate(idx))

    def code(self, x):
        """Cell label of each point (trailing axis holds the coordinates when dim > 1)."""
        x = np.asarray(x, dtype=float)
        if self.space.dim == 1:
            x = x[..., None]
        idx = []
        for a, e in enumerate(self.edges):
            i = np.searchsorted(e, x[..., a], side="right") - 1
            idx.append(np.clip(i, 0, len(e) - 2))
        return np.ravel_multi_index(tuple(idx), self.shape)

    def join(self, other):
        """Common refinement; for product partitions it is the union of cut points."""
        if other.space != self.space:
            raise ValueError("partitions live on different spaces")
        edges = [np.union1d(a, b) for a, b in zip(self.edges, other.edges)]
        return Partition(self.space, edges, f"{self.name}v{other.name}")

    def __repr__(self):
        return f"Partition({self.name}, cells={self.n_cells})"


def partition_catalog(space):
    """Dyadic partitions at levels 1..4, split along each single axis and along all axes."""
    parts = []
    for level in range(1, 5):
        if space.dim == 1:
            parts.append(Partition.dyadic(space, level))
            continue
        for a in range(space.dim):
            parts.append(Partition.dyadic(space, level, axes=(a,)))
        parts.append(Partition.dyadic(space, level))
    return parts


def shannon(p):
    """Entropy of a probability vector in nats, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def partition_entropy(mu, xi):
    """``H_mu(xi)`` for a binned measure on a one-dimensional space."""
    if xi.space.dim != 1:
        raise ValueError("partition_entropy needs a one-dimensional partition")
    e = xi.edges[0]
    masses = np.array([mu.mass(lo, hi) for lo, hi in zip(e[:-1], e[1:])])
    return shannon(masses / masses.sum())


def block_entropies(symbols, n_max=None, floor=SAMPLE_FLOOR):
    """Plug-in entropies ``H_n`` of the length-n prefixes of the rows of ``symbols``.

    Returns ``(H, distinct)`` for n = 1..n_used, stopping before the first depth
    whose distinct-block count times ``floor`` exceeds the sample count (the
    count never decreases, so no later depth can qualify).
    """
    S = check_symbols(symbols)
    m, depth = S.shape
    n_max = depth if n_max is None else min(n_max, depth)
    codes = np.zeros(m, dtype=np.int64)
    H, distinct = [], []
    for n in range(n_max):
        pair = codes * (int(S[:, n].max()) + 1) + S[:, n]
        _, codes, counts = np.unique(pair, return_inverse=True, return_counts=True)
        codes = codes.astype(np.int64)
        if floor * counts.size > m:
            break
        H.append(shannon(counts / m))
        distinct.append(counts.size)
    return np.array(H), np.array(distinct, dtype=int)


@dataclass
class EntropyEstimate:
    value: float
    n_used: int
    omega_samples: int
    per_n_curve: list
    stderr: list = field(default_factory=list)
    partition: str = ""

    @property
    def curve_array(self):
        return np.array(self.per_n_curve, dtype=float).reshape(-1, 2)


def _symbol_matrix(kernel, xi, xs, seed, stream, depth):
    """Codes of ``x, T_{w1} x, ...`` for all starts under one common noise sequence."""
    omega = NoiseSequence(kernel, seed, stream)
    symbols = omega.take(0, depth)
    out = np.empty((len(xs), depth), dtype=np.int64)
    x = xs
    for k in range(depth):
        out[:, k] = xi.code(x)
        if k + 1 < depth:
            x = kernel.apply(symbols[k], x)
    return out


def random_entropy(kernel, xi, starts, n_max=14, n_omega=1, seed=0, floor=SAMPLE_FLOOR):
    """Random entropy ``h_mu(xi)`` estimated as the min over n of ``H_n / n``.

    ``starts`` are mu-distributed start points (or a callable ``rng, m -> points``);
    every noise sample ``omega_j`` (stream ``j``) codes all starts with the same
    fiber maps, and ``H_n`` is averaged over the ``omega_j``. Depths failing the
    sample floor in any noise sample are excluded.
    """
    seed = check_seed(seed)
    n_max = check_count(n_max, name="n_max", minimum=1)
    n_omega = check_count(n_omega, name="n_omega", minimum=1)
    per_omega = []
    for j in range(n_omega):
        xs = starts(stream_rng(seed, 1_000_003, j)) if callable(starts) else np.asarray(starts, float)
        S = _symbol_matrix(kernel, xi, xs, seed, j, n_max)
        H, _ = block_entropies(S, n_max, floor)
        per_omega.append(H)
    depth = min(len(H) for H in per_omega)
    if depth == 0:
        raise InsufficientSamplesError(
            f"{len(xs)} start points cannot resolve even one symbol of a {xi.n_cells}-cell "
            f"partition at the {floor}x sample floor; use a larger sample")
    Hs = np.array([H[:depth] for H in per_omega])
    n = np.arange(1, depth + 1)
    rate = Hs.mean(axis=0) / n
    stderr = (Hs.std(axis=0, ddof=1) / np.sqrt(n_omega) / n) if n_omega > 1 else np.full(depth, np.nan)
    curve = [(int(k), float(r)) for k, r in zip(n, rate)]
    return EntropyEstimate(float(rate.min()), int(depth), n_omega, curve, stderr.tolist(), xi.name)


@dataclass
class GeneratingReport:
    depths: np.ndarray
    diameters: np.ndarray
    n_cells: np.ndarray


def _cell_diameters(x, codes, periodic):
    """Largest arc hull over cells of sorted grid points ``x`` (grid spacing added back)."""
    G = x.size
    order = np.lexsort((x, codes))
    c, xs = codes[order], x[order]
    starts = np.flatnonzero(np.r_[True, c[1:] != c[:-1]])
    stops = np.r_[starts[1:], G]
    worst = 0.0
    for a, b in zip(starts, stops):
        pts = xs[a:b]
        if periodic and b - a > 1:
            gaps = np.diff(np.r_[pts, pts[0] + 1.0])
            hull = 1.0 - gaps.max()
        else:
            hull = pts[-1] - pts[0]
        worst = max(worst, hull + 1.0 / G)
    return min(worst, 1.0) if periodic else worst


def generating_check(kernel, xi, depth, seed=0, n_omega=1, resolution=None):
    """Largest cell diameter of the join of ``(T^i_omega)^{-1} xi``, i = 0..d, for d = 0..depth.

    Cells are resolved on a uniform grid of ``G`` midpoints; a cell's diameter is
    the length of the smallest arc (interval) holding its grid points plus one
    grid spacing, which is exact for cells that are unions of grid intervals.
    The reported value is the max over ``n_omega`` noise samples.
    """
    space = kernel.space
    if space.dim != 1:
        raise ValueError("generating_check supports one-dimensional spaces")
    depth = check_count(depth, name="depth", minimum=0)
    G = resolution or min(2 ** (depth + 7), 2 ** 20)
    lo, hi = space.bounds[0]
    grid = lo + (hi - lo) * (np.arange(G) + 0.5) / G
    diam = np.zeros(depth + 1)
    cells = np.zeros(depth + 1, dtype=int)
    for j in range(n_omega):
        S = _symbol_matrix(kernel, xi, grid, check_seed(seed), j, depth + 1)
        codes = np.zeros(G, dtype=np.int64)
        for d in range(depth + 1):
            _, codes = np.unique(codes * xi.n_cells + S[:, d], return_inverse=True)
            unit = (grid - lo) / (hi - lo)
            diam[d] = max(diam[d], (hi - lo) * _cell_diameters(unit, codes, space.periodic))
            cells[d] = max(cells[d], codes.max() + 1)
    return GeneratingReport(np.arange(depth + 1), diam, cells)


@dataclass
class EntropyGap:
    h: float
    lambda_plus: float
    gap: float
    partition: str
    estimates: dict = field(repr=False, default_factory=dict)


def positive_exponent_sum(kernel, starts, seed=0, n=10_000):
    """Ensemble mean of the sum of positive exponents over skew orbits from ``starts``."""
    report = random_met(kernel, starts, seed, n, shifts=())
    spectra = report.spectra
    return float(np.mean(np.sum(np.where(spectra > 0, spectra, 0.0), axis=1)))


def entropy_formula_gap(kernel, starts, catalog=None, n_max=200, n_omega=1, seed=0,
                        lyapunov_starts=None, lyapunov_n=10_000):
    """``(h, Lambda+, Lambda+ - h)`` for a system with stationary start sample ``starts``.

    ``h`` is the smallest estimate over the partition catalog. Every catalog
    partition generates for the builtin systems, and the plug-in ``H_n / n``
    approaches ``h`` from the side of ``H_1`` at finite n, so the least of them
    is the least biased.
    """
    catalog = partition_catalog(kernel.space) if catalog is None else catalog
    estimates = {}
    for xi in catalog:
        try:
            estimates[xi.name] = random_entropy(kernel, xi, starts, n_max, n_omega, seed)
        except InsufficientSamplesError:
            continue
    if not estimates:
        raise InsufficientSamplesError("no catalog partition is resolvable with this sample")
    best = min(estimates, key=lambda k: estimates[k].value)
    h = estimates[best].value
    ls = lyapunov_starts
    if ls is None:
        ls = starts(stream_rng(check_seed(seed), 1_000_003, 0)) if callable(starts) else starts
        ls = np.asarray(ls)[:100]
    lam = positive_exponent_sum(kernel, ls, seed, lyapunov_n)
    return EntropyGap(h, lam, lam - h, best, estimates)
