import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rdslab.exceptions import ConfigError
from rdslab.state_space import (BaseMap, StateSpace, builtin_maps, cat_map, circle_doubling,
                                circle_expanding, iterate, make_map, planar_contraction, rotation)

unit = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)


def test_doubling_three_steps_exact():
    assert iterate(circle_doubling(), 0.1, 3) == 0.8


def test_zero_iterations_is_identity():
    for m in builtin_maps().values():
        x = m.space.sample_uniform(np.random.default_rng(1))
        assert np.array_equal(iterate(m, x, 0), x)


def test_rotation_two_steps():
    assert iterate(rotation(), 0.0, 2) == pytest.approx(2 * (np.sqrt(2) - 1) % 1, abs=1e-15)
    assert iterate(rotation(), 0.0, 2) == pytest.approx(0.828427, abs=1e-6)


def test_builtin_catalog_contents():
    maps = builtin_maps()
    for name in ("circle_doubling", "circle_expanding", "rotation", "cat_map", "planar_contraction"):
        assert name in maps
    assert maps["circle_doubling"](0.75) == 0.5
    assert np.array_equal(maps["cat_map"](np.array([0.0, 0.0])), [0.0, 0.0])
    x = iterate(maps["planar_contraction"], np.array([0.9, -0.7]), 200)
    assert np.all(np.abs(x) < 1e-50)


def test_wrap_never_returns_one():
    c = StateSpace.circle()
    assert c.wrap(-1e-20) == 0.0
    assert np.all(c.wrap(np.array([-1e-20, 1.0, 2.0])) == 0.0)


def test_map_leaving_interval_rejected():
    space = StateSpace.interval(-1.0, 1.0)
    with pytest.raises(ConfigError):
        BaseMap("bad", space, lambda x: 2 * x, lambda x: np.full(np.shape(x), 2.0))


def test_unknown_map_and_bad_params():
    with pytest.raises(ConfigError):
        make_map("henon")
    with pytest.raises(ConfigError):
        circle_expanding(2.5)
    with pytest.raises(ConfigError):
        make_map("rotation", beta=1)


@given(unit, st.integers(0, 30), st.integers(0, 30))
def test_iteration_composes_exactly(x, a, b):
    for m in (circle_doubling(), rotation(), circle_expanding(3)):
        assert iterate(m, x, a + b) == iterate(m, iterate(m, x, a), b)


@given(unit, unit, unit)
def test_circle_metric(x, y, z):
    c = StateSpace.circle()
    d = c.distance(x, y)
    assert d == pytest.approx(min(abs(x - y), 1 - abs(x - y)), abs=1e-15)
    assert d == c.distance(y, x)
    assert c.distance(x, z) <= d + c.distance(y, z) + 1e-15


@given(st.integers(0, 2**32 - 1))
def test_maps_are_closed(seed):
    rng = np.random.default_rng(seed)
    for m in builtin_maps().values():
        x = m.space.sample_uniform(rng, 64)
        assert m.space.contains(m(x))


def _fd_jacobian(m, x, h=1e-6):
    d = m.space.dim
    if d == 1:
        return ((m.func(x + h) - m.func(x - h)) / (2 * h))[..., None, None]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((m.func(x + e) - m.func(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for m in builtin_maps().values():
        x = m.space.sample_uniform(rng, 32)
        lo, hi = m.space.lower, m.space.upper
        # keep away from the boundary and seams
        x = np.clip(x, lo + 2e-6, hi - 2e-6)
        J, F = m.jacobian(x), _fd_jacobian(m, x)
        assert np.allclose(J, F, rtol=1e-6, atol=1e-6)


def test_doubling_jacobian_and_cat_determinant():
    x = np.random.default_rng(2).random(100)
    assert np.all(circle_doubling().jacobian(x) == 2.0)
    y = np.random.default_rng(3).random((100, 2))
    assert np.allclose(np.linalg.det(cat_map().jacobian(y)), 1.0, atol=1e-14)
    assert planar_contraction().jacobian(y).shape == (100, 2, 2)
