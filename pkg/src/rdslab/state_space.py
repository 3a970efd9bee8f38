"""Phase spaces and the deterministic base maps that the noise models perturb.

Points on one-dimensional spaces (circle, interval) are plain floats or
arrays of any shape; points on d-dimensional spaces carry a trailing axis of
length d. Every map is vectorized over the leading axes.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigError
from .validation import check_count

PERIODIC = ("circle", "torus")


@dataclass(frozen=True)
class StateSpace:
    kind: str
    dim: int
    bounds: tuple = ()

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "interval", "box"):
            raise ConfigError(f"unknown state space kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("dimension must be positive")
        if self.kind == "circle" and self.dim != 1:
            raise ConfigError("the circle is one-dimensional")
        if self.kind in PERIODIC:
            object.__setattr__(self, "bounds", ((0.0, 1.0),) * self.dim)
        else:
            if len(self.bounds) != self.dim:
                raise ConfigError("bounds must give one (lo, hi) pair per dimension")
            for lo, hi in self.bounds:
                if not lo < hi:
                    raise ConfigError(f"empty bound ({lo}, {hi})")
            object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))

    @classmethod
    def circle(cls):
        return cls("circle", 1)

    @classmethod
    def torus(cls, d):
        return cls("torus", d)

    @classmethod
    def interval(cls, a, b):
        return cls("interval", 1, ((a, b),))

    @classmethod
    def box(cls, bounds):
        return cls("box", len(bounds), tuple(bounds))

    @property
    def periodic(self):
        return self.kind in PERIODIC

    @property
    def lower(self):
        lo = np.array([b[0] for b in self.bounds])
        return lo[0] if self.dim == 1 else lo

    @property
    def upper(self):
        hi = np.array([b[1] for b in self.bounds])
        return hi[0] if self.dim == 1 else hi

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    def wrap(self, x):
        """Reduce ``x`` into the fundamental domain (floor based, periodic spaces only)."""
        if not self.periodic:
            return x
        y = x - np.floor(x)
        # x - floor(x) rounds up to 1.0 for tiny negative x
        return np.where(y >= 1.0, 0.0, y) if np.ndim(y) else (0.0 if y >= 1.0 else float(y))

    def displacement(self, x, y):
        """Signed displacement from ``x`` to ``y``; the shortest one on periodic spaces."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periodic:
            d = d - np.floor(d + 0.5)
        return d

    def distance(self, x, y):
        d = np.abs(self.displacement(x, y))
        if self.dim == 1:
            return d if np.ndim(d) else float(d)
        return np.sqrt(np.sum(d * d, axis=-1))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim > 1 and (x.ndim == 0 or x.shape[-1] != self.dim):
            return False
        lo, hi = self.lower, self.upper
        if self.periodic:
            ok = (x >= 0.0) & (x < 1.0)
        else:
            ok = (x >= lo) & (x <= hi)
        return bool(np.all(ok))

    def sample_uniform(self, rng, size=None):
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        if self.dim > 1:
            shape = shape + (self.dim,)
        u = rng.random(shape)
        return self.lower + (self.upper - self.lower) * u


@dataclass(frozen=True, eq=False)
class BaseMap:
    """A deterministic map of ``space`` into itself together with its derivative.

    ``func`` returns the unreduced image (a lift on periodic spaces); calling the
    map reduces it once with :meth:`StateSpace.wrap`. ``deriv`` returns the
    derivative: same shape as ``x`` in dimension one, ``(..., d, d)`` otherwise.
    """

    name: str
    space: StateSpace
    func: Callable
    deriv: Callable
    params: dict = field(default_factory=dict)
    # affine on every bin of a uniform partition (exact Ulam rows without sub-cells)
    piecewise_affine: bool = False

    def __post_init__(self):
        if not self.space.periodic:
            rng = np.random.default_rng(0)
            x = self.space.sample_uniform(rng, 1024)
            x = np.concatenate([x, np.array([self.space.lower, self.space.upper])])
            if not self.space.contains(self.func(x)):
                raise ConfigError(f"map {self.name!r} sends points outside its state space")

    def __call__(self, x):
        return self.space.wrap(self.func(x))

    def jacobian(self, x):
        J = np.asarray(self.deriv(x), dtype=float)
        if self.space.dim == 1:
            return J[..., None, None]
        return J

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"BaseMap({self.name}{', ' if args else ''}{args})"


def iterate(m, x, n):
    """Return ``m`` applied ``n`` times to ``x``."""
    n = check_count(n, name="n")
    for _ in range(n):
        x = m(x)
    return x


def circle_expanding(b=2):
    if int(b) != b or b < 2:
        raise ConfigError(f"expanding circle map needs an integer factor b >= 2, got {b}")
    b = int(b)
    name = "circle_doubling" if b == 2 else "circle_expanding"
    return BaseMap(name, StateSpace.circle(), lambda x: b * x,
                   lambda x: np.full(np.shape(x), float(b)), {"b": b}, piecewise_affine=True)


def circle_doubling():
    return circle_expanding(2)


DEFAULT_ROTATION = float(np.sqrt(2.0) - 1.0)


def rotation(alpha=DEFAULT_ROTATION):
    alpha = float(alpha)
    return BaseMap("rotation", StateSpace.circle(), lambda x: x + alpha,
                   lambda x: np.ones(np.shape(x)), {"alpha": alpha}, piecewise_affine=True)


def circle_identity():
    return BaseMap("circle_identity", StateSpace.circle(), lambda x: x + 0.0,
                   lambda x: np.ones(np.shape(x)), piecewise_affine=True)


def cat_map(matrix=((2, 1), (1, 1))):
    A = np.asarray(matrix, dtype=float)
    if A.shape != (2, 2) or np.any(A != np.round(A)) or abs(abs(np.linalg.det(A)) - 1) > 1e-12:
        raise ConfigError("cat map needs an integer 2x2 matrix with determinant +-1")

    def jac(x):
        return np.broadcast_to(A, np.shape(x)[:-1] + (2, 2)).copy()

    return BaseMap("cat_map", StateSpace.torus(2), lambda x: np.asarray(x) @ A.T, jac,
                   {"matrix": A.astype(int).tolist()})


def planar_contraction(factor=0.5, half_width=1.0):
    factor = float(factor)
    if not 0 < factor < 1:
        raise ConfigError("contraction factor must lie in (0, 1)")
    h = float(half_width)

    def jac(x):
        return np.broadcast_to(factor * np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()

    return BaseMap("planar_contraction", StateSpace.box(((-h, h), (-h, h))),
                   lambda x: factor * np.asarray(x), jac, {"factor": factor, "half_width": h})


def interval_contraction(factor=0.5, half_width=1.0):
    factor = float(factor)
    if not 0 < factor < 1:
        raise ConfigError("contraction factor must lie in (0, 1)")
    h = float(half_width)
    return BaseMap("interval_contraction", StateSpace.interval(-h, h), lambda x: factor * x,
                   lambda x: np.full(np.shape(x), factor), {"factor": factor, "half_width": h},
                   piecewise_affine=True)


MAP_FACTORIES = {
    "circle_doubling": circle_doubling,
    "circle_expanding": circle_expanding,
    "rotation": rotation,
    "circle_identity": circle_identity,
    "cat_map": cat_map,
    "planar_contraction": planar_contraction,
    "interval_contraction": interval_contraction,
}


def make_map(name, **params):
    try:
        factory = MAP_FACTORIES[name]
    except KeyError:
        raise ConfigError(f"unknown map {name!r}; choose from {sorted(MAP_FACTORIES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for map {name!r}: {exc}") from None


def builtin_maps():
    """Catalog of every builtin map at its default parameters."""
    return {name: factory() for name, factory in MAP_FACTORIES.items()}
