"""Transition kernels p(.|x) and random-map laws.

Every kernel here is realized by random maps ``x -> T_w(x)`` with the noise
symbol ``w`` drawn uniformly from an eps-ball, so the same object serves the
Markov-chain view (``sample``/``density``/``mass``) and the skew-product view
(``draw_symbols``/``apply``/``fiber_jacobian``).
"""

import math

import numpy as np
from scipy.special import gamma

from .exceptions import ConfigError, NoDensityError
from .state_space import BaseMap, StateSpace, make_map
from .validation import check_epsilon

TRAP_EPS_MAX = 0.125


def ball_volume(d, r):
    return math.pi ** (d / 2) / gamma(d / 2 + 1) * r**d


def uniform_ball(rng, eps, d, size=None):
    """Uniform draws from the closed eps-ball of R^d (d=1: the interval [-eps, eps])."""
    if d == 1:
        return eps * (2.0 * rng.random(size) - 1.0)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    g = rng.standard_normal(shape + (d,))
    r = rng.random(shape) ** (1.0 / d)
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    return eps * r[..., None] * g


def _overlap(lo, hi, a, b):
    return np.maximum(0.0, np.minimum(hi, b) - np.maximum(lo, a))


def arc_overlap(space, lo, hi, center, radius):
    """Length of ``[lo, hi]`` intersected with ``[center - radius, center + radius]``.

    On the circle the arc is matched against every integer translate of the window.
    """
    a, b = center - radius, center + radius
    if not space.periodic:
        return _overlap(lo, hi, a, b)
    total = 0.0
    for k in (-2.0, -1.0, 0.0, 1.0, 2.0):
        total = total + _overlap(lo + k, hi + k, a, b)
    return total


class RandomMapLaw:
    """Law of random maps ``T_w`` with ``w`` uniform on the eps-ball around 0."""

    def __init__(self, fiber_map, eps, param_dim, space):
        self.fiber_map = fiber_map
        self.eps = eps
        self.param_dim = param_dim
        self.space = space

    def draw(self, rng, size=None):
        return uniform_ball(rng, self.eps, self.param_dim, size)

    def unperturbed(self, x):
        zero = 0.0 if self.param_dim == 1 else np.zeros(self.param_dim)
        return self.fiber_map(zero, x)

    def induced_mass(self, x, lo, hi, n_nodes=20000):
        """theta({w : T_w(x) in [lo, hi]}) by midpoint quadrature over a scalar parameter."""
        if self.param_dim != 1:
            raise NotImplementedError("quadrature over the parameter is implemented for scalar noise")
        w = -self.eps + (np.arange(n_nodes) + 0.5) * (2 * self.eps / n_nodes)
        y = self.fiber_map(w, x)
        if self.space.periodic:
            inside = ((y - lo) % 1.0) <= (hi - lo)
        else:
            inside = (y >= lo) & (y <= hi)
        return float(np.mean(inside))


class TransitionKernel:
    """Common interface; concrete variants override the noise-specific parts."""

    variant = "abstract"
    has_density = True

    def __init__(self, space, eps):
        self.space = space
        self.eps = eps

    # skew-product view
    @property
    def symbol_dim(self):
        return self.space.dim

    def draw_symbols(self, rng, size=None):
        return uniform_ball(rng, self.eps, self.symbol_dim, size)

    def apply(self, symbol, x):
        raise NotImplementedError

    def fiber_jacobian(self, symbol, x):
        raise NotImplementedError

    # Markov-chain view
    def sample(self, x, rng):
        return self.apply(self.draw_symbols(rng), x)

    def density(self, x, y):
        raise NotImplementedError

    def mass(self, x, lo, hi):
        raise NotImplementedError

    @property
    def law(self):
        return RandomMapLaw(self.apply, self.eps, self.symbol_dim, self.space)

    def describe(self):
        return {"variant": self.variant, "eps": self.eps}


class AdditiveKernel(TransitionKernel):
    """``T_u(x) = T0(x) + u`` with ``u`` uniform on the eps-ball.

    Equivalently p(.|x) is normalized volume on the eps-ball around ``center(x)``.
    """

    variant = "additive"

    def __init__(self, base_map, eps):
        space = base_map.space
        upper = 0.5 if space.periodic else None
        super().__init__(space, check_epsilon(eps, upper=upper))
        self.base_map = base_map
        self.center = base_map
        if not space.periodic:
            self._check_support_inside()

    def _check_support_inside(self):
        rng = np.random.default_rng(0)
        x = self.space.sample_uniform(rng, 2048)
        c = self.center(x)
        lo, hi = self.space.lower, self.space.upper
        if np.any(c - self.eps < lo - 1e-12) or np.any(c + self.eps > hi + 1e-12):
            raise ConfigError(
                f"eps={self.eps} pushes {self.center.name!r} images outside the state space")

    def apply(self, symbol, x):
        return self.space.wrap(self.center(x) + symbol)

    def fiber_jacobian(self, symbol, x):
        return self.center.jacobian(x)

    def density(self, x, y):
        r = self.space.distance(self.center(x), y)
        value = np.where(r <= self.eps, 1.0 / ball_volume(self.space.dim, self.eps), 0.0)
        return float(value) if np.ndim(value) == 0 else value

    def mass(self, x, lo, hi):
        if self.space.dim != 1:
            raise NotImplementedError("interval masses are defined on one-dimensional spaces")
        return arc_overlap(self.space, lo, hi, self.center(x), self.eps) / (2 * self.eps)

    def describe(self):
        return {"variant": self.variant, "map": self.base_map.name, **self.base_map.params,
                "eps": self.eps}


class RandomJumpKernel(AdditiveKernel):
    """Uniform jump to the eps-neighborhood of ``T0(x)``, drawn independently each step."""

    variant = "random_jump"


def trap_map(eps, z):
    """Doubling map flattened to 0 on (-eps, eps), with C1 cubic collars on eps <= |z| <= 2 eps."""
    return trap_base_map(eps)(z)


def _trap_lift(eps, z):
    z = np.asarray(z, dtype=float)
    s = np.where(z < 0.5, z, z - 1.0)
    a = np.abs(s)
    sig = np.clip((a - eps) / eps, 0.0, 1.0)
    collar = np.sign(s) * eps * (10.0 * sig**2 - 6.0 * sig**3)
    out = np.where(a < eps, 0.0, np.where(a < 2 * eps, collar, 2.0 * z))
    return out


def _trap_deriv(eps, z):
    z = np.asarray(z, dtype=float)
    s = np.where(z < 0.5, z, z - 1.0)
    a = np.abs(s)
    sig = np.clip((a - eps) / eps, 0.0, 1.0)
    collar = 20.0 * sig - 18.0 * sig**2
    return np.where(a < eps, 0.0, np.where(a < 2 * eps, collar, 2.0))


def trap_base_map(eps):
    eps = check_epsilon(eps, upper=TRAP_EPS_MAX)
    return BaseMap("trap_map", StateSpace.circle(), lambda z: _trap_lift(eps, z),
                   lambda z: _trap_deriv(eps, z), {"eps": eps})


class DegenerateTrapKernel(AdditiveKernel):
    """Uniform law on ``[phi(z) - eps, phi(z) + eps]`` where ``phi`` is :func:`trap_map`.

    Orbits entering (-eps, eps) stay in [-eps, eps] forever, so every
    stationary measure sits there although the base map is the doubling map.
    """

    variant = "degenerate_trap"

    def __init__(self, eps):
        eps = check_epsilon(eps, upper=TRAP_EPS_MAX)
        super().__init__(trap_base_map(eps), eps)
        self.base_map = make_map("circle_doubling")

    def describe(self):
        return {"variant": self.variant, "map": "circle_doubling", "eps": self.eps}


class ParametricFamily:
    """Smooth family ``T(w, x)`` with scalar parameter, on a one-dimensional space.

    ``func`` returns the unreduced image; ``dparam`` and ``dx`` are its partial
    derivatives. ``w -> T(w, x)`` must be strictly monotone on the noise range.
    """

    def __init__(self, name, space, func, dparam, dx, params=None):
        if space.dim != 1:
            raise ConfigError("parametric families are implemented on one-dimensional spaces")
        self.name = name
        self.space = space
        self.func = func
        self.dparam = dparam
        self.dx = dx
        self.params = params or {}


def modulated_additive_family(base_map, amplitude=0.5):
    """``T(w, x) = T0(x) + w (1 + a cos 2 pi x)``: spread of the noise varies with x."""
    a = float(amplitude)
    if not 0 <= a < 1:
        raise ConfigError("modulation amplitude must lie in [0, 1)")
    return ParametricFamily(
        "modulated_additive", base_map.space,
        lambda w, x: base_map.func(x) + w * (1.0 + a * np.cos(2 * np.pi * x)),
        lambda w, x: (1.0 + a * np.cos(2 * np.pi * x)) + 0.0 * w,
        lambda w, x: base_map.deriv(x) - w * 2 * np.pi * a * np.sin(2 * np.pi * x),
        {"map": base_map.name, **base_map.params, "amplitude": a})


class ParametricKernel(TransitionKernel):
    """Random parameter ``w`` uniform on [-eps, eps] fed into a family ``T(w, x)``."""

    variant = "parametric"

    def __init__(self, family, eps):
        super().__init__(family.space, check_epsilon(eps, upper=0.5))
        self.family = family

    @property
    def symbol_dim(self):
        return 1

    def apply(self, symbol, x):
        return self.space.wrap(self.family.func(symbol, x))

    def fiber_jacobian(self, symbol, x):
        return np.asarray(self.family.dx(symbol, x), dtype=float)[..., None, None]

    def _offset(self, w, x):
        # continuous in w: displacement of T(w, x) from T(0, x)
        return self.family.func(w, x) - self.family.func(0.0 * w, x)

    def _invert(self, x, target):
        """Parameter w with offset(w, x) == target, clipped to [-eps, eps] (vectorized bisection)."""
        x, target = np.broadcast_arrays(np.asarray(x, float), np.asarray(target, float))
        lo = np.full(x.shape, -self.eps)
        hi = np.full(x.shape, self.eps)
        increasing = self.family.dparam(0.0, x) > 0
        f_lo, f_hi = self._offset(lo, x), self._offset(hi, x)
        below = np.where(increasing, target <= f_lo, target >= f_lo)
        above = np.where(increasing, target >= f_hi, target <= f_hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            f = self._offset(mid, x)
            go_right = np.where(increasing, f < target, f > target)
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        w = 0.5 * (lo + hi)
        w = np.where(below, -self.eps, w)
        w = np.where(above, self.eps, w)
        return w, below | above

    def density(self, x, y):
        x = np.asarray(x, float)
        center = self.space.wrap(self.family.func(0.0, x))
        target = self.space.displacement(center, y)
        w, outside = self._invert(x, target)
        dens = 1.0 / (2 * self.eps * np.abs(self.family.dparam(w, x)))
        value = np.where(outside, 0.0, dens)
        return float(value) if np.ndim(value) == 0 else value

    def mass(self, x, lo, hi):
        x = np.asarray(x, float)
        center = self.family.func(0.0, x)
        total = 0.0
        shifts = (-2.0, -1.0, 0.0, 1.0, 2.0) if self.space.periodic else (0.0,)
        for k in shifts:
            t_lo = lo + k - center
            t_hi = hi + k - center
            w_lo, _ = self._invert(x, t_lo)
            w_hi, _ = self._invert(x, t_hi)
            total = total + np.abs(w_hi - w_lo)
        return total / (2 * self.eps)

    @property
    def law(self):
        return RandomMapLaw(self.apply, self.eps, 1, self.space)

    def describe(self):
        return {"variant": self.variant, "family": self.family.name, **self.family.params,
                "eps": self.eps}


class DeltaKernel(TransitionKernel):
    """p(A|x) = 1 if T0(x) in A else 0: the unperturbed map seen as a Markov chain."""

    variant = "delta"
    has_density = False

    def __init__(self, base_map):
        super().__init__(base_map.space, 0.0)
        self.base_map = base_map
        self.center = base_map

    def draw_symbols(self, rng, size=None):
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        if self.symbol_dim > 1:
            shape = shape + (self.symbol_dim,)
        return np.zeros(shape) if shape else 0.0

    def apply(self, symbol, x):
        return self.base_map(x)

    def fiber_jacobian(self, symbol, x):
        return self.base_map.jacobian(x)

    def density(self, x, y):
        raise NoDensityError("the delta kernel is singular and has no density")

    def mass(self, x, lo, hi):
        y = self.base_map(x)
        if self.space.periodic:
            return np.where(((y - lo) % 1.0) <= (hi - lo), 1.0, 0.0)
        return np.where((y >= lo) & (y <= hi), 1.0, 0.0)

    def describe(self):
        return {"variant": self.variant, "map": self.base_map.name, **self.base_map.params}


def sample(kernel, x, rng):
    return kernel.sample(x, rng)


def density(kernel, x, y):
    return kernel.density(x, y)


KERNEL_VARIANTS = ("additive", "random_jump", "parametric", "degenerate_trap", "delta")


def make_kernel(variant, map_name=None, map_params=None, eps=None, **options):
    """Build a kernel from its config description."""
    map_params = dict(map_params or {})
    if variant == "degenerate_trap":
        if map_name not in (None, "circle_doubling"):
            raise ConfigError("the degenerate trap kernel perturbs the doubling map only")
        return DegenerateTrapKernel(eps)
    if map_name is None:
        raise ConfigError(f"kernel {variant!r} needs a base map")
    base = make_map(map_name, **map_params)
    if variant == "additive":
        return AdditiveKernel(base, eps)
    if variant == "random_jump":
        return RandomJumpKernel(base, eps)
    if variant == "delta":
        return DeltaKernel(base)
    if variant == "parametric":
        family = modulated_additive_family(base, options.get("amplitude", 0.5))
        return ParametricKernel(family, eps)
    raise ConfigError(f"unknown kernel variant {variant!r}; choose from {list(KERNEL_VARIANTS)}")
