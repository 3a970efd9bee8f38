"""Euler-Maruyama stochastic flows driven by regenerable Brownian increments."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import wasserstein_distance

from .exceptions import ConfigError
from .skew import stream_rng
from .validation import check_count, check_epsilon, check_seed

PATH_BLOCK = 1024
OVERFLOW_GUARD = 1e8
GRID_TOL = 1e-9


class SdeSystem:
    """``dX = f(t, X) dt + eps * sigma(t, X) dW`` on R^dim with a k-dimensional Brownian motion.

    ``drift(t, x)`` and ``diffusion(t, x)`` take points with a trailing axis of
    length ``dim``; ``diffusion`` returns ``(..., dim, noise_dim)``.
    """

    def __init__(self, name, drift, diffusion, dim, noise_dim, eps, dt=1e-3, horizon=1.0,
                 params=None):
        self.name = name
        self.drift = drift
        self.diffusion = diffusion
        self.dim = check_count(dim, name="dim", minimum=1)
        self.noise_dim = check_count(noise_dim, name="noise_dim", minimum=1)
        self.eps = check_epsilon(eps, allow_zero=True)
        if not dt > 0:
            raise ConfigError("dt must be positive")
        self.dt = float(dt)
        self.steps = grid_steps(horizon, self.dt, name="horizon")
        self.horizon = float(horizon)
        self.params = dict(params or {})

    def with_eps(self, eps):
        return SdeSystem(self.name, self.drift, self.diffusion, self.dim, self.noise_dim, eps,
                         self.dt, self.horizon, self.params)

    def describe(self):
        return {"sde": self.name, **self.params, "eps": self.eps, "dt": self.dt,
                "horizon": self.horizon}


def grid_steps(t, dt, name="t"):
    """Number of steps of size ``dt`` in ``t``; rejects times off the grid."""
    m = t / dt
    k = int(round(m))
    if k < 0 or abs(m - k) > GRID_TOL * max(1.0, abs(m)):
        raise ValueError(f"{name}={t} is not on the dt={dt} grid")
    return k


@lru_cache(maxsize=64)
def _increment_block(seed, stream, b, noise_dim, dt):
    z = stream_rng(seed, stream, b).standard_normal((PATH_BLOCK, noise_dim))
    z *= np.sqrt(dt)
    z.setflags(write=False)
    return z


class NoisePath:
    """Brownian increments ``dW_0, dW_1, ...`` (each Gaussian(0, dt I)), generated on demand.

    ``streams`` is one stream index or a sequence of them (a batch of paths).
    Increment ``m`` of stream ``s`` depends only on ``(seed, s, m // PATH_BLOCK)``,
    so ``shift`` is an index offset.
    """

    def __init__(self, seed, dt, noise_dim=1, streams=0, offset=0):
        self.seed = check_seed(seed)
        self.dt = float(dt)
        self.noise_dim = int(noise_dim)
        self.batched = not np.isscalar(streams)
        self.streams = tuple(int(s) for s in np.atleast_1d(streams))
        self.offset = int(offset)

    def shift(self, steps):
        return NoisePath(self.seed, self.dt, self.noise_dim,
                         self.streams if self.batched else self.streams[0], self.offset + steps)

    def take(self, start, stop):
        """Increments ``start .. stop-1``: shape ``(m, k)``, or ``(m, n_paths, k)`` when batched."""
        lo, hi = self.offset + start, self.offset + stop
        m = max(hi - lo, 0)
        out = np.empty((m, len(self.streams), self.noise_dim))
        if m:
            first = lo // PATH_BLOCK
            for j, s in enumerate(self.streams):
                blocks = [_increment_block(self.seed, s, b, self.noise_dim, self.dt)
                          for b in range(first, (hi - 1) // PATH_BLOCK + 1)]
                data = np.concatenate(blocks) if len(blocks) > 1 else blocks[0]
                out[:, j] = data[lo - first * PATH_BLOCK:hi - first * PATH_BLOCK]
        return out if self.batched else out[:, 0]

    def coarsen(self, factor, steps):
        """The first ``steps`` increments summed in groups of ``factor`` (an :class:`ArrayPath`)."""
        steps = check_count(steps, name="steps", minimum=1)
        if steps % factor:
            raise ValueError("steps must be a multiple of the coarsening factor")
        W = self.take(0, steps)
        W = W.reshape((steps // factor, factor) + W.shape[1:]).sum(axis=1)
        return ArrayPath(W, self.dt * factor)


class ArrayPath:
    """Increments held in memory, for coarsened or user-supplied paths."""

    def __init__(self, increments, dt, offset=0):
        self.increments = np.asarray(increments, dtype=float)
        self.dt = float(dt)
        self.offset = int(offset)
        self.batched = self.increments.ndim == 3
        self.noise_dim = self.increments.shape[-1]

    def shift(self, steps):
        return ArrayPath(self.increments, self.dt, self.offset + steps)

    def take(self, start, stop):
        lo, hi = self.offset + start, self.offset + stop
        if hi > len(self.increments):
            raise ValueError("path is shorter than the requested integration")
        return self.increments[lo:hi]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diverged: object
    steps: int

    @property
    def final(self):
        return self.states[-1]


def em_integrate(system, x0, path, steps=None, record_every=1):
    """Euler-Maruyama: ``X_{m+1} = X_m + f(t_m, X_m) dt + eps sigma(t_m, X_m) dW_m``.

    ``t_m = (path.offset + m) dt``, so integrating a shifted path continues the
    clock where the unshifted one left it. Paths leaving the overflow guard are
    frozen at their last finite state and flagged in ``diverged``; a single
    path is then truncated at the step of divergence.
    """
    if abs(path.dt - system.dt) > 1e-15 * system.dt:
        raise ValueError("path and system use different step sizes")
    steps = system.steps if steps is None else check_count(steps, name="steps")
    record_every = check_count(record_every, name="record_every", minimum=1)
    x = np.array(x0, dtype=float)
    if x.ndim == 0 or x.shape[-1] != system.dim:
        x = x[..., None] if system.dim == 1 else x
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    batched = path.batched
    alive = np.ones(x.shape[:-1], dtype=bool)
    dt, eps = system.dt, system.eps
    times, states = [path.offset * dt], [x.copy()]
    done = 0
    while done < steps:
        chunk = min(PATH_BLOCK, steps - done)
        dW = path.take(done, done + chunk)
        for j in range(chunk):
            m = done + j
            t = (path.offset + m) * dt
            noise = np.einsum("...ij,...j->...i", system.diffusion(t, x), dW[j])
            x_new = x + system.drift(t, x) * dt + eps * noise
            bad = ~np.all(np.isfinite(x_new) & (np.abs(x_new) <= OVERFLOW_GUARD), axis=-1)
            if np.any(bad & alive):
                alive &= ~bad
                if not batched:
                    times.append((path.offset + m + 1) * dt)
                    states.append(x.copy())
                    return Trajectory(np.array(times), np.array(states), True, m + 1)
            x = np.where(alive[..., None], x_new, x)
            if (m + 1) % record_every == 0 or m + 1 == steps:
                times.append((path.offset + m + 1) * dt)
                states.append(x.copy())
        done += chunk
    diverged = ~alive if batched else False
    return Trajectory(np.array(times), np.array(states), diverged, steps)


def flow_map(system, path, t):
    """The same-noise solution map ``x0 -> X_t(omega) x0`` for grid time ``t``."""
    steps = grid_steps(t, system.dt)

    def phi(x0):
        if steps == 0:
            return np.array(x0, dtype=float)
        return em_integrate(system, x0, path, steps, record_every=steps).final

    return phi


def flow_cocycle_residual(system, path, s, t, x0):
    """``|X_{s+t}(omega) x0 - X_t(theta(s) omega) X_s(omega) x0|`` for grid step counts s, t."""
    s = check_count(s, name="s")
    t = check_count(t, name="t")
    dt = system.dt
    direct = flow_map(system, path, (s + t) * dt)(x0)
    composed = flow_map(system, path.shift(s), t * dt)(flow_map(system, path, s * dt)(x0))
    return float(np.max(np.abs(direct - composed)))


def _constant_diffusion(dim, noise_dim, scale=1.0):
    S = scale * np.eye(dim, noise_dim)

    def diffusion(t, x):
        return np.broadcast_to(S, np.shape(x)[:-1] + S.shape)

    return diffusion


def ornstein_uhlenbeck(eps=0.2, rate=1.0, dt=1e-3, horizon=20.0):
    rate = float(rate)
    return SdeSystem("ornstein_uhlenbeck", lambda t, x: -rate * x, _constant_diffusion(1, 1),
                     1, 1, eps, dt, horizon, {"rate": rate})


def double_well(eps=0.1, dt=1e-3, horizon=20.0):
    """Gradient flow of ``V(x) = x^4/4 - x^2/2``: sinks at +-1."""
    return SdeSystem("double_well", lambda t, x: x - x ** 3, _constant_diffusion(1, 1),
                     1, 1, eps, dt, horizon)


def planar_sink(eps=0.1, rate=1.0, dt=1e-3, horizon=20.0):
    rate = float(rate)
    return SdeSystem("planar_sink", lambda t, x: -rate * x, _constant_diffusion(2, 2),
                     2, 2, eps, dt, horizon, {"rate": rate})


def pure_noise(eps=1.0, dim=1, dt=1e-3, horizon=1.0):
    return SdeSystem("pure_noise", lambda t, x: np.zeros_like(x), _constant_diffusion(dim, dim),
                     dim, dim, eps, dt, horizon, {"dim": dim})


SDE_FACTORIES = {
    "ornstein_uhlenbeck": ornstein_uhlenbeck,
    "double_well": double_well,
    "planar_sink": planar_sink,
    "pure_noise": pure_noise,
}

SINKS = {
    "ornstein_uhlenbeck": ([0.0], [1.0]),
    "planar_sink": ([[0.0, 0.0]], [1.0]),
    "double_well": ([-1.0, 1.0], [0.5, 0.5]),
}


def make_sde(name, **params):
    try:
        factory = SDE_FACTORIES[name]
    except KeyError:
        raise ConfigError(f"unknown SDE {name!r}; choose from {sorted(SDE_FACTORIES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for SDE {name!r}: {exc}") from None


def ensemble_endpoints(system, x0, n_paths, seed):
    """``X_T`` of ``n_paths`` independent paths (stream ``i`` drives path ``i``)."""
    n_paths = check_count(n_paths, name="n_paths", minimum=1)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1, system.dim)
                         if np.ndim(x0) else np.full((1, system.dim), float(x0)),
                         (n_paths, system.dim)).copy()
    path = NoisePath(seed, system.dt, system.noise_dim, streams=range(n_paths))
    traj = em_integrate(system, x0, path, record_every=system.steps or 1)
    return traj.final, traj.diverged


def empirical_w1(samples, points, weights=None):
    """W1 between an empirical law and a finite candidate (any law in 1-d, a Dirac in 2-d)."""
    samples = np.asarray(samples, dtype=float)
    points = np.asarray(points, dtype=float)
    if samples.ndim == 2 and samples.shape[1] == 1:
        samples = samples[:, 0]
        points = points.reshape(-1)
    if samples.ndim == 1:
        return float(wasserstein_distance(samples, points, v_weights=weights))
    if len(points) != 1:
        raise ValueError("multi-dimensional candidates must be a single Dirac mass")
    return float(np.mean(np.linalg.norm(samples - points[0], axis=1)))


@dataclass
class FlowStudyRow:
    eps: float
    w1: float
    n_diverged: int


@dataclass
class FlowStudy:
    rows: list
    candidate: tuple
    decreasing: bool

    @property
    def distances(self):
        return np.array([r.w1 for r in self.rows])


def zero_noise_flow_study(system, eps_schedule, candidate=None, n_paths=2000, seed=0, x0=None):
    """Long-run law at ``X_T`` for each ``eps`` against a candidate sink law.

    ``candidate`` is ``(points, weights)``; the default is the builtin sink of
    ``system``. Starts default to the first candidate point.
    """
    schedule = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if candidate is None:
        if system.name not in SINKS:
            raise ConfigError(f"no builtin sink candidate for {system.name!r}")
        candidate = SINKS[system.name]
    points, weights = candidate
    start = points[0] if x0 is None else x0
    rows = []
    for eps in schedule:
        X, diverged = ensemble_endpoints(system.with_eps(eps), start, n_paths, seed)
        rows.append(FlowStudyRow(eps, empirical_w1(X, points, weights), int(np.sum(diverged))))
    d = np.array([r.w1 for r in rows])
    return FlowStudy(rows, candidate, bool(np.all(np.diff(d) < 0)))
