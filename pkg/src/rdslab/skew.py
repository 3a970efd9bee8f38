"""Skew-product engine: noise sequences, the shift, fiber maps and time averages."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .validation import check_count, check_seed

BLOCK = 4096
WORKERS_ENV = "RDSLAB_WORKERS"


def stream_rng(seed, *key):
    """Independent generator for ``(seed, *key)``; the same key always gives the same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


class NoiseSequence:
    """Lazily generated i.i.d. noise symbols ``omega_1, omega_2, ...``.

    Entry ``k`` is regenerated on demand from ``(seed, stream, k // BLOCK)``, so
    the shift is only an offset and ``shift(s)`` costs nothing.
    """

    def __init__(self, kernel, seed, stream=0, offset=0):
        self.kernel = kernel
        self.seed = check_seed(seed)
        self.stream = int(stream)
        self.offset = int(offset)

    def shift(self, s=1):
        return NoiseSequence(self.kernel, self.seed, self.stream, self.offset + s)

    def _block(self, b):
        return _cached_block(self.kernel, self.seed, self.stream, b)

    def take(self, start, stop):
        """Symbols ``start .. stop-1`` of this (possibly shifted) sequence as one array."""
        lo, hi = self.offset + start, self.offset + stop
        if hi <= lo:
            return self.kernel.draw_symbols(np.random.default_rng(0), 0)
        blocks = [self._block(b) for b in range(lo // BLOCK, (hi - 1) // BLOCK + 1)]
        data = np.concatenate(blocks, axis=0) if len(blocks) > 1 else blocks[0]
        first = (lo // BLOCK) * BLOCK
        return data[lo - first:hi - first]

    def __getitem__(self, k):
        return self.take(k, k + 1)[0]

    def __repr__(self):
        return f"NoiseSequence(seed={self.seed}, stream={self.stream}, offset={self.offset})"


@lru_cache(maxsize=256)
def _cached_block(kernel, seed, stream, b):
    data = kernel.draw_symbols(stream_rng(seed, stream, b), BLOCK)
    data = np.asarray(data, dtype=float)
    data.setflags(write=False)
    return data


@dataclass(frozen=True)
class SkewState:
    omega: NoiseSequence
    x: object


class SkewSystem:
    """The skew product ``(omega, x) -> (sigma omega, T_{omega_1}(x))`` of a kernel."""

    def __init__(self, kernel):
        self.kernel = kernel
        self.space = kernel.space

    def noise(self, seed, stream=0):
        return NoiseSequence(self.kernel, seed, stream)

    def state(self, x, seed, stream=0):
        return SkewState(self.noise(seed, stream), x)

    def step(self, state):
        return SkewState(state.omega.shift(1), self.kernel.apply(state.omega[0], state.x))

    def fiber(self, n, omega, x):
        """``phi(n, omega)(x)``: the composition of the first ``n`` fiber maps."""
        n = check_count(n, name="n")
        symbols = omega.take(0, n)
        for k in range(n):
            x = self.kernel.apply(symbols[k], x)
        return x

    def orbit(self, x, omega, n):
        """Points ``x_0 .. x_n`` of the random orbit (array of length ``n + 1``)."""
        n = check_count(n, name="n")
        apply = self.kernel.apply
        out = np.empty((n + 1,) + np.shape(x))
        out[0] = x
        done = 0
        while done < n:
            chunk = min(BLOCK, n - done)
            symbols = omega.take(done, done + chunk)
            for k in range(chunk):
                x = apply(symbols[k], x)
                out[done + k + 1] = x
            done += chunk
        return out

    def orbit_batch(self, xs, omegas, n):
        """Orbits of several starts, each under its own noise sequence, in lockstep.

        Returns an array of shape ``(n + 1, len(xs), ...)``.
        """
        xs = np.asarray(xs, dtype=float)
        symbols = np.stack([om.take(0, n) for om in omegas], axis=1)
        out = np.empty((n + 1,) + xs.shape)
        out[0] = xs
        for k in range(n):
            xs = self.kernel.apply(symbols[k], xs)
            out[k + 1] = xs
        return out


def step(system, state):
    return system.step(state)


def cocycle_check(system, omega, s, t, x):
    """Distance between ``phi(t+s, omega)x`` and ``phi(t, theta(s) omega) phi(s, omega) x``."""
    s = check_count(s, name="s")
    t = check_count(t, name="t")
    direct = system.fiber(s + t, omega, x)
    composed = system.fiber(t, omega.shift(s), system.fiber(s, omega, x))
    return float(np.max(system.space.distance(direct, composed)))


@dataclass(frozen=True)
class TimeAverage:
    value: float
    drift: float
    n: int


def time_average(system, state, observable, n, diagnostics=False):
    """Birkhoff average of ``observable`` over ``x_0 .. x_{n-1}`` along the random orbit.

    With ``diagnostics=True`` a :class:`TimeAverage` is returned whose ``drift`` is
    ``|avg_n - avg_{3n/4}|``, a cheap flag for non-converged averages.
    """
    n = check_count(n, name="n", minimum=1)
    orbit = system.orbit(state.x, state.omega, n - 1)
    values = np.asarray(observable(orbit), dtype=float)
    if values.ndim == 0:
        values = np.full(n, float(values))
    value = float(np.mean(values))
    if not diagnostics:
        return value
    m = max(1, (3 * n) // 4)
    return TimeAverage(value, abs(value - float(np.mean(values[:m]))), n)


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def run_ensemble(func, n_streams, workers=None):
    """Evaluate ``func(stream_index)`` for every stream; results come back in index order."""
    n_streams = check_count(n_streams, name="n_streams", minimum=0)
    workers = worker_count(workers)
    if workers == 1:
        return [func(i) for i in range(n_streams)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_streams)))


@dataclass(frozen=True)
class EnsembleSummary:
    name: str
    mean: float
    stderr: float
    n: int


def ensemble_average(system, x0, observable, n, seed, n_streams, workers=None, name="observable"):
    """Mean and standard error of time averages over independent noise streams."""
    def one(i):
        return time_average(system, system.state(x0, seed, stream=i), observable, n)

    values = np.array(run_ensemble(one, n_streams, workers))
    stderr = float(values.std(ddof=1) / np.sqrt(n_streams)) if n_streams > 1 else float("nan")
    return EnsembleSummary(name, float(values.mean()), stderr, n_streams)
