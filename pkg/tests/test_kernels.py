import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from rdslab.exceptions import ConfigError, NoDensityError
from rdslab.io import density_curve, read_csv, write_density_curve
from rdslab.kernels import (AdditiveKernel, DegenerateTrapKernel, DeltaKernel, RandomJumpKernel,
                            density, make_kernel, sample, trap_base_map, trap_map)
from rdslab.state_space import StateSpace, make_map


def doubling():
    return make_map("circle_doubling")


def test_random_jump_sample_and_density():
    k = RandomJumpKernel(doubling(), 0.1)
    rng = np.random.default_rng(0)
    ys = np.array([sample(k, 0.3, rng) for _ in range(500)])
    assert np.all(k.space.distance(ys, 0.6) <= 0.1)
    assert density(k, 0.3, 0.65) == pytest.approx(5.0)
    assert density(k, 0.3, 0.9) == 0.0


def test_delta_kernel():
    k = DeltaKernel(doubling())
    rng = np.random.default_rng(0)
    assert all(sample(k, 0.3, rng) == 0.6 for _ in range(10))
    with pytest.raises(NoDensityError):
        density(k, 0.3, 0.6)


def test_additive_rotation_support():
    k = AdditiveKernel(make_map("rotation"), 0.05)
    ys = k.apply(k.draw_symbols(np.random.default_rng(1), 1000), 0.0)
    assert np.all(k.space.distance(ys, np.sqrt(2) - 1) <= 0.05 + 1e-15)


def test_trap_density_at_origin():
    # phi(0) = 0, so the density is uniform 1/(2 eps) on [-eps, eps]
    assert density(DegenerateTrapKernel(0.01), 0.0, 0.0) == pytest.approx(50.0)


def test_trap_map_values():
    assert trap_map(0.01, 0.005) == 0.0
    assert trap_map(0.01, 0.25) == 0.5
    assert trap_map(0.01, 0.02) == pytest.approx(0.04, abs=1e-15)


def _hermite_oracle(eps, z):
    # cubic through (eps, 0) slope 0 and (2 eps, 4 eps) slope 2, solved as a linear system
    A = np.array([[1, eps, eps**2, eps**3], [0, 1, 2 * eps, 3 * eps**2],
                  [1, 2 * eps, 4 * eps**2, 8 * eps**3], [0, 1, 4 * eps, 12 * eps**2]])
    c = np.linalg.solve(A, [0.0, 0.0, 4 * eps, 2.0])
    return c[0] + c[1] * z + c[2] * z**2 + c[3] * z**3


def test_trap_collar_matches_hermite_construction():
    eps = 0.01
    z = np.linspace(eps, 2 * eps, 101)
    assert np.allclose(trap_base_map(eps).func(z), _hermite_oracle(eps, z), atol=1e-13)
    assert np.allclose(trap_base_map(eps).func(-z), -_hermite_oracle(eps, z), atol=1e-13)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.1])
def test_trap_is_c1_at_junctions(eps):
    f = trap_base_map(eps).func
    h = 1e-8
    for z0 in (eps, 2 * eps, -eps, -2 * eps):
        left = (f(z0) - f(z0 - h)) / h
        right = (f(z0 + h) - f(z0)) / h
        assert abs(left - right) < 1e-4
    # continuity of the reduced map on the circle, including the seam at 0
    z = np.linspace(-0.5, 0.5, 200001)
    y = trap_map(eps, z % 1.0)
    jumps = StateSpace.circle().distance(y[1:], y[:-1])
    assert jumps.max() < 1e-4


def test_trap_eps_bounds():
    for bad in (0.125, 0.2, 0.0, -0.01):
        with pytest.raises(ConfigError):
            DegenerateTrapKernel(bad)


@given(st.floats(-0.0099, 0.0099))
def test_trap_never_leaves_neighborhood(z):
    k = DegenerateTrapKernel(0.01)
    x = z % 1.0
    inside = k.mass(x, -0.01, 0.01)
    assert float(inside) == pytest.approx(1.0, abs=1e-12)


KERNELS = {
    "additive_doubling": lambda: AdditiveKernel(doubling(), 0.1),
    "random_jump_rotation": lambda: RandomJumpKernel(make_map("rotation"), 0.05),
    "trap": lambda: DegenerateTrapKernel(0.03),
    "parametric": lambda: make_kernel("parametric", "circle_doubling", eps=0.05),
    "interval_contraction": lambda: AdditiveKernel(make_map("interval_contraction"), 0.3),
}


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_density_integrates_to_one(name):
    k = KERNELS[name]()
    lo, hi = k.space.lower, k.space.upper
    for x in (0.137, 0.5, 0.9):
        x = lo + (hi - lo) * x
        # breakpoints at the support ends (the density jumps there)
        w = np.array([-k.eps, k.eps])
        ends = k.space.wrap(k.apply(w, x)) if k.space.periodic else k.apply(w, x)
        pts = sorted(e for e in np.ravel(ends) if lo < e < hi)
        total, err = quad(lambda y: float(k.density(x, y)), lo, hi, points=pts or None, limit=400,
                          epsabs=1e-13, epsrel=1e-13)
        assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_sampling_matches_density(name):
    k = KERNELS[name]()
    x = k.space.lower + 0.37 * (k.space.upper - k.space.lower)
    n = 100_000
    rng = np.random.default_rng(12)
    ys = k.apply(k.draw_symbols(rng, n), np.full(n, x))
    lo, hi = k.space.lower, k.space.upper
    edges = np.linspace(lo, hi, 26)
    counts = np.histogram(ys, edges)[0]
    p = np.array([float(np.squeeze(k.mass(x, a, b))) for a, b in zip(edges[:-1], edges[1:])])
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma + 1e-9)


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True), st.integers(0, 1000))
def test_additive_monotone_coupling(x, x2, seed):
    k = AdditiveKernel(make_map("rotation"), 0.05)
    y = sample(k, x, np.random.default_rng(seed))
    y2 = sample(k, x2, np.random.default_rng(seed))
    expected = k.space.displacement(k.base_map(x2), k.base_map(x))
    assert k.space.displacement(y2, y) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("x", [0.1, 0.45, 0.99])
def test_induced_kernel_matches_additive_mass(x):
    k = AdditiveKernel(doubling(), 0.05)
    law = k.law
    assert law.unperturbed(x) == k.base_map(x)
    for lo, hi in [(0.15, 0.25), (0.0, 0.5), (0.9, 0.99)]:
        assert law.induced_mass(x, lo, hi) == pytest.approx(float(k.mass(x, lo, hi)), abs=1e-4)


def test_parametric_density_is_derivative_of_mass():
    k = KERNELS["parametric"]()
    x = 0.2
    center = k.space.wrap(k.family.func(0.0, x))
    h = 1e-6
    for y in center + np.array([-0.03, 0.0, 0.02]):
        fd = float(k.mass(x, y - h, y + h)) / (2 * h)
        assert k.density(x, y) == pytest.approx(fd, rel=1e-5)


def test_make_kernel_errors():
    with pytest.raises(ConfigError):
        make_kernel("gaussian", "circle_doubling", eps=0.1)
    with pytest.raises(ConfigError):
        make_kernel("additive", "circle_doubling", eps=0.6)
    with pytest.raises(ConfigError):
        make_kernel("degenerate_trap", "rotation", eps=0.01)
    with pytest.raises(ConfigError):
        # images of the contraction plus noise would leave [-1, 1]
        make_kernel("additive", "interval_contraction", eps=0.8)


def test_density_curve_export(tmp_path):
    k = RandomJumpKernel(doubling(), 0.1)
    y, d = density_curve(k, 0.3, 1000)
    assert np.sum(d) / 1000 == pytest.approx(1.0, abs=1e-9)
    path = write_density_curve(tmp_path / "d.csv", k, 0.3, 100)
    _, cols, rows = read_csv(path)
    assert cols == ["y", "density"] and len(rows) == 100
