"""Products of random matrices: Lyapunov spectra, the limit matrix and Oseledets filtrations.

Two independent routes estimate the exponents:

* :func:`qr_lyapunov` re-orthonormalizes the running product with QR and
  averages ``log |R_ii|`` (double precision, any horizon);
* :func:`limit_matrix` forms the product exactly enough in multiprecision to
  take its SVD, giving ``[(phi_n)^* phi_n]^{1/2n}`` literally.
"""

from dataclasses import dataclass, field

import mpmath
import numpy as np

from .exceptions import LyapunovOverflowError
from .skew import NoiseSequence, stream_rng
from .validation import check_count, check_matrix_sequence, check_seed

MINUS_INF = float(np.log(np.finfo(float).tiny))   # sentinel for exponents equal to -inf
MAX_EXACT_DIM = 6


@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray
    basis: np.ndarray
    n_used: int
    minus_inf: np.ndarray
    reorth_period: int = 1
    trace: list = field(default_factory=list, repr=False)

    @property
    def positive_sum(self):
        return float(np.sum(self.exponents[self.exponents > 0]))


class _QRAccumulator:
    """Running QR re-orthonormalization, batched over leading axes."""

    def __init__(self, k, batch_shape=(), period=1):
        self.k = k
        self.period = period
        self.Q = np.broadcast_to(np.eye(k), batch_shape + (k, k)).copy()
        self.M = self.Q.copy()
        self.logs = np.zeros(batch_shape + (k,))
        self.zero = np.zeros(batch_shape + (k,), dtype=bool)
        self.n = 0
        self.pending = 0

    def update(self, X):
        if self.k == 1:
            self._record(np.abs(X[..., 0, :]))
            self.n += 1
            return
        with np.errstate(over="ignore", invalid="ignore"):
            # overflow is detected and reported at the next flush
            self.M = X @ self.M
        self.n += 1
        self.pending += 1
        if self.pending == self.period:
            self._flush()

    def _record(self, d):
        self.zero |= d == 0
        with np.errstate(divide="ignore"):
            self.logs += np.log(d)

    def _flush(self):
        if self.pending == 0:
            return
        if not np.all(np.isfinite(self.M)):
            raise LyapunovOverflowError(
                f"matrix product overflowed within {self.period} steps; "
                "use a smaller re-orthonormalization period")
        Q, R = np.linalg.qr(self.M)
        self._record(np.abs(np.diagonal(R, axis1=-2, axis2=-1)))
        self.Q = Q
        self.M = Q.copy()
        self.pending = 0

    def exponents(self):
        self._flush()
        return self.logs / max(self.n, 1)

    def result(self):
        exps = self.exponents()
        exps = np.where(self.zero, MINUS_INF, exps)
        order = np.argsort(-exps, axis=-1, kind="stable")
        exps = np.take_along_axis(exps, order, axis=-1)
        zero = np.take_along_axis(self.zero, order, axis=-1)
        basis = np.take_along_axis(self.Q, order[..., None, :], axis=-1) if self.k > 1 else self.Q
        return exps, basis, zero


def qr_lyapunov(matrices, reorth_period=1, trace_every=None):
    """Lyapunov spectrum of the product ``X_n ... X_1`` by periodic QR re-factorization.

    Parameters
    ----------
    matrices : array_like, shape (n, k, k)
        The factors in the order they act (``X_1`` first).
    reorth_period : int
        Number of factors multiplied between two QR factorizations.
    trace_every : int, optional
        Record the running exponents every this many steps.
    """
    X = check_matrix_sequence(matrices, name="matrices")
    n, k = X.shape[0], X.shape[1]
    reorth_period = check_count(reorth_period, name="reorth_period", minimum=1)
    if reorth_period > n:
        raise ValueError("reorth_period may not exceed the number of factors")
    acc = _QRAccumulator(k, period=reorth_period)
    trace = []
    for i in range(n):
        acc.update(X[i])
        if trace_every and (i + 1) % trace_every == 0 and acc.pending == 0:
            trace.append((i + 1, np.sort(acc.logs / acc.n)[::-1].copy()))
    exps, basis, zero = acc.result()
    return LyapunovSpectrum(exps, basis, n, zero, reorth_period, trace)


def log_det_average(matrices):
    """Time average of ``log |det X_i|`` (the sum of all exponents)."""
    X = check_matrix_sequence(matrices, name="matrices")
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log(np.abs(np.linalg.det(X)))))


class MatrixCocycle:
    """i.i.d. random matrices ``X_1, X_2, ...`` drawn by ``sampler(rng, n) -> (n, k, k)``.

    ``realize`` is deterministic in ``(seed, stream)``. The integrability proxy
    tracks the running max and mean of ``log+ ||X||`` over every realization.
    """

    def __init__(self, sampler, dim, name="cocycle"):
        self.sampler = sampler
        self.dim = dim
        self.name = name
        self.max_log_norm = 0.0
        self._log_norm_sum = 0.0
        self._count = 0

    def realize(self, n, seed, stream=0):
        n = check_count(n, name="n", minimum=1)
        X = np.asarray(self.sampler(stream_rng(check_seed(seed), stream), n), dtype=float)
        X = check_matrix_sequence(X)
        lp = np.maximum(0.0, np.log(np.linalg.norm(X, ord=2, axis=(1, 2))))
        self.max_log_norm = max(self.max_log_norm, float(lp.max()))
        self._log_norm_sum += float(lp.sum())
        self._count += n
        return X

    @property
    def mean_log_norm(self):
        return self._log_norm_sum / self._count if self._count else 0.0


def constant_cocycle(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return MatrixCocycle(lambda rng, n: np.broadcast_to(A, (n,) + A.shape).copy(), A.shape[0],
                         "constant")


def choice_cocycle(matrices, probs=None):
    """Each factor is one of ``matrices`` drawn independently with ``probs``."""
    mats = np.asarray(matrices, dtype=float)
    if mats.ndim == 1:
        mats = mats[:, None, None]

    def sampler(rng, n):
        return mats[rng.choice(len(mats), size=n, p=probs)]

    return MatrixCocycle(sampler, mats.shape[1], "choice")


def rotation_diag_cocycle(diag=(2.0, 0.5)):
    """``X = diag(a, b) R(theta)`` with a uniform random rotation angle per step."""
    D = np.diag(np.asarray(diag, dtype=float))

    def sampler(rng, n):
        th = rng.uniform(0.0, 2 * np.pi, n)
        c, s = np.cos(th), np.sin(th)
        R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        return D @ R

    return MatrixCocycle(sampler, 2, "rotation_diag")


def derivative_cocycle(kernel, x, omega, n):
    """Fiber Jacobians ``D T_{omega_k}(x_{k-1})``, k = 1..n, along a skew orbit."""
    n = check_count(n, name="n", minimum=1)
    symbols = omega.take(0, n)
    out = []
    for k in range(n):
        out.append(kernel.fiber_jacobian(symbols[k], x))
        x = kernel.apply(symbols[k], x)
    return np.asarray(out, dtype=float).reshape(n, kernel.space.dim, kernel.space.dim)


@dataclass
class LimitMatrix:
    matrix: np.ndarray
    log_eigenvalues: np.ndarray
    vectors: np.ndarray
    minus_inf: np.ndarray
    n: int
    exact_vectors: object = field(default=None, repr=False)
    dps: int = 0


def _required_digits(X):
    """Decimal digits that resolve the smallest singular value of the product."""
    spec = qr_lyapunov(X)
    finite = spec.exponents[~spec.minus_inf]
    spread = (finite.max() - finite.min()) if finite.size else 0.0
    return int(X.shape[0] * spread / np.log(10)) + 40


def _mp_product(X, ctx):
    P = ctx.eye(X.shape[1])
    for A in X:
        P = ctx.matrix(A.tolist()) * P
    return P


def limit_matrix(matrices):
    """``A = [(phi_n)^* phi_n]^{1/2n}`` from the SVD of the product ``phi_n = X_n ... X_1``.

    The product is accumulated in multiprecision (enough digits to resolve the
    smallest singular value), so the SVD is taken of the literal product.
    Singular values lost below the working precision are reported as exponent
    ``-inf`` (``MINUS_INF`` sentinel, eigenvalue 0).
    """
    X = check_matrix_sequence(matrices, name="matrices")
    n, k = X.shape[0], X.shape[1]
    if k > MAX_EXACT_DIM:
        raise ValueError(f"limit_matrix is limited to k <= {MAX_EXACT_DIM}")
    ctx = mpmath.MPContext()
    ctx.dps = _required_digits(X)
    P = _mp_product(X, ctx)
    U, S, V = ctx.svd_r(P)
    s = [S[i] for i in range(k)]
    s1 = max(s)
    zero = np.array([si == 0 or (s1 > 0 and si < s1 * ctx.mpf(10) ** (-(ctx.dps - 20))) for si in s])
    logs = np.array([MINUS_INF if z else float(ctx.log(si) / n) for si, z in zip(s, zero)])
    order = np.argsort(-logs, kind="stable")
    logs, zero = logs[order], zero[order]
    Vt = np.array([[float(V[i, j]) for j in range(k)] for i in range(k)])
    vectors = Vt.T[:, order]
    eig = np.where(zero, 0.0, np.exp(logs))
    A = vectors @ np.diag(eig) @ vectors.T
    exact = ctx.matrix(k, k)
    for c, i in enumerate(order):
        for r in range(k):
            exact[r, c] = V[i, r]
    return LimitMatrix(A, logs, vectors, zero, n, exact, ctx.dps)


def vector_growth(matrices, y, dps=None):
    """(1/n) log ||X_n ... X_1 y|| computed by brute-force multiprecision products.

    ``y`` may be a float vector or an mpmath column (e.g. an exact Oseledets vector).
    """
    X = check_matrix_sequence(matrices, name="matrices")
    ctx = mpmath.MPContext()
    ctx.dps = dps or _required_digits(X)
    v = ctx.matrix([[yi] for yi in (list(y) if not isinstance(y, mpmath.matrix) else
                                    [y[i] for i in range(y.rows)])])
    for A in X:
        v = ctx.matrix(A.tolist()) * v
    return float(ctx.log(ctx.norm(v)) / X.shape[0])


@dataclass
class Filtration:
    """Nested subspaces ``R^k = Sigma_1 > Sigma_2 > ... > Sigma_{l+1} = {0}``.

    ``exponents[h-1]`` and ``bases[h-1]`` describe ``Sigma_h``; vectors of
    ``Sigma_h`` outside ``Sigma_{h+1}`` grow at ``exponents[h-1]``.
    """

    exponents: list
    bases: list
    dims: list
    threshold: float
    diagnostic: str = ""
    exact_bases: list = field(default_factory=list, repr=False)

    def subspace(self, h):
        """Basis of ``Sigma_h`` (1-based, ``h = len(dims)`` gives the last non-trivial one)."""
        return self.bases[h - 1]

    def sample_vector(self, h, rng):
        """Random vector of ``Sigma_h`` kept at the working precision of the exact basis."""
        B = self.exact_bases[h - 1]
        c = B.ctx.matrix(rng.standard_normal(B.cols).tolist())
        return B * c


def cluster_exponents(exps, n, minus_inf=None):
    """Group sorted exponents; a new cluster starts at gaps above ``max(1e-3, 5/sqrt(n))``."""
    thr = max(1e-3, 5.0 / np.sqrt(n))
    groups = [[0]]
    for i in range(1, len(exps)):
        both_inf = minus_inf is not None and minus_inf[i] and minus_inf[i - 1]
        if exps[i - 1] - exps[i] > thr and not both_inf:
            groups.append([i])
        else:
            groups[-1].append(i)
    return groups, thr


def oseledets_subspaces(matrices):
    """Finite-n Oseledets filtration from the right singular vectors of the product."""
    X = check_matrix_sequence(matrices, name="matrices")
    n, k = X.shape[0], X.shape[1]
    lm = limit_matrix(X)
    groups, thr = cluster_exponents(lm.log_eigenvalues, n, lm.minus_inf)
    diagnostic = ""
    gaps = [lm.log_eigenvalues[g[0] - 1] - lm.log_eigenvalues[g[0]] for g in groups[1:]]
    if len(groups) == 1:
        diagnostic = "no resolvable splitting"
    elif any(gap < 2 * thr for gap in gaps):
        # gap too close to the estimation noise: merge everything into a coarser filtration
        merged = [[i for g in groups for i in g]]
        diagnostic = "ambiguous cluster gap; returned the trivial filtration"
        groups = merged
    exps, bases, dims, exact = [], [], [], []
    for h, g in enumerate(groups):
        cols = list(range(g[0], k))
        exps.append(float(np.mean(lm.log_eigenvalues[g])))
        bases.append(lm.vectors[:, cols])
        dims.append(len(cols))
        exact.append(lm.exact_vectors[:, cols[0]:k] if cols else None)
    bases.append(np.zeros((k, 0)))
    dims.append(0)
    return Filtration(exps, bases, dims, thr, diagnostic, exact)


@dataclass
class METReport:
    spectra: np.ndarray
    shifted: dict
    invariance_gap: float
    gaps: dict
    constant: bool
    constant_value: np.ndarray
    n: int
    max_log_norm: float


def _spectrum_gap(a, b):
    both = (a == MINUS_INF) & (b == MINUS_INF)
    return np.where(both, 0.0, np.abs(a - b))


def random_met(kernel, xs, seed, n, shifts=(1, 10, 100), reorth_period=1):
    """Spectra along skew orbits started at ``(omega_i, x_i)`` and at their images ``S_t``.

    Start ``i`` uses noise stream ``i``. The invariance gap is
    ``max |lambda(S_t(omega, x)) - lambda(omega, x)|`` over starts and shifts;
    the spectrum is reported as a constant when its ensemble spread is below
    ``5 / sqrt(n)``.
    """
    n = check_count(n, name="n", minimum=1)
    seed = check_seed(seed)
    space = kernel.space
    xs = np.asarray(xs, dtype=float)
    S = xs.shape[0]
    d = space.dim
    starts = (0,) + tuple(sorted(set(int(t) for t in shifts)))
    total = n + max(starts)
    symbols = np.stack([NoiseSequence(kernel, seed, i).take(0, total) for i in range(S)], axis=1)
    accs = {t: _QRAccumulator(d, (S,), reorth_period) for t in starts}
    x = xs
    max_log_norm = 0.0
    for step in range(total):
        J = np.asarray(kernel.fiber_jacobian(symbols[step], x), dtype=float).reshape(S, d, d)
        nrm = np.linalg.norm(J, ord=2, axis=(1, 2)) if d > 1 else np.abs(J[:, 0, 0])
        with np.errstate(divide="ignore"):
            max_log_norm = max(max_log_norm, float(np.max(np.log(np.maximum(nrm, 1.0)))))
        for t, acc in accs.items():
            if t <= step < t + n:
                acc.update(J)
        x = kernel.apply(symbols[step], x)
    results = {t: acc.result()[0] for t, acc in accs.items()}
    base = results[0]
    gaps = {t: float(np.max(_spectrum_gap(base, results[t]))) for t in starts[1:]}
    spread = np.max(base, axis=0) - np.min(base, axis=0)
    constant = bool(np.all(spread < 5.0 / np.sqrt(n)))
    return METReport(base, {t: results[t] for t in starts[1:]},
                     max(gaps.values()) if gaps else 0.0, gaps, constant,
                     np.mean(base, axis=0), n, max_log_norm)
