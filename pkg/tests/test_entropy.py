import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rdslab.entropy import (Partition, _symbol_matrix, block_entropies, entropy_formula_gap,
                            generating_check, partition_catalog, partition_entropy, random_entropy, shannon)
from rdslab.estimators import BlockEntropyEstimator
from rdslab.exceptions import InsufficientSamplesError
from rdslab.harness import builtin_kernel, stationary_sampler
from rdslab.kernels import AdditiveKernel, DegenerateTrapKernel, DeltaKernel
from rdslab.measures import BinnedMeasure
from rdslab.state_space import StateSpace, make_map

CIRCLE = StateSpace.circle()
BINARY = Partition.dyadic(CIRCLE, 1)
LOG2 = np.log(2.0)
ALPHA = np.sqrt(2) - 1


def uniform_starts(m, seed=0):
    return np.random.default_rng(seed).random(m)


def test_partition_entropy_examples():
    leb = BinnedMeasure.lebesgue(CIRCLE, 64)
    assert partition_entropy(leb, BINARY) == pytest.approx(LOG2, abs=1e-14)
    assert partition_entropy(leb, Partition.dyadic(CIRCLE, 2)) == pytest.approx(np.log(4), abs=1e-14)
    assert partition_entropy(BinnedMeasure.dirac(CIRCLE, 64, 0.3), BINARY) == 0.0
    assert shannon([0.5, 0.0, 0.5]) == pytest.approx(LOG2)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=16))
def test_entropy_maximal_for_uniform(w):
    p = np.array(w) / np.sum(w)
    assert shannon(p) <= np.log(len(p)) + 1e-12
    if np.ptp(p) > 1e-6:
        assert shannon(p) < np.log(len(p))


@given(st.lists(st.floats(0.001, 0.999), max_size=6), st.lists(st.floats(0.001, 0.999), max_size=6),
       st.integers(0, 2**32 - 1))
def test_joins_commute(a, b, seed):
    xi = Partition(CIRCLE, [[0.0, *a, 1.0]])
    zeta = Partition(CIRCLE, [[0.0, *b, 1.0]])
    mu = BinnedMeasure(CIRCLE, np.random.default_rng(seed).dirichlet(np.ones(50)))
    assert partition_entropy(mu, xi.join(zeta)) == pytest.approx(partition_entropy(mu, zeta.join(xi)),
                                                                 abs=1e-12)
    assert partition_entropy(mu, xi.join(zeta)) >= partition_entropy(mu, xi) - 1e-12


def test_partition_codes_and_catalog():
    torus = StateSpace.torus(2)
    xi = Partition.dyadic(torus, 1)
    assert xi.n_cells == 4
    assert xi.code(np.array([[0.1, 0.7], [0.6, 0.2]])).tolist() == [1, 2]
    assert xi.cell_bounds(1) == ((0.0, 0.5), (0.5, 1.0))
    assert [p.name for p in partition_catalog(CIRCLE)] == ["dyadic1", "dyadic2", "dyadic3", "dyadic4"]
    assert len(partition_catalog(torus)) == 12
    with pytest.raises(ValueError):
        Partition(CIRCLE, [[0.2, 1.0]])


def _binary_digits(x, n):
    # k-th binary digit of x, independent of any map iteration
    return (np.floor(x[:, None] * 2.0 ** (np.arange(n) + 1)) % 2).astype(np.int64)


def test_doubling_entropy_matches_binary_digit_coding():
    k = DeltaKernel(make_map("circle_doubling"))
    xs = uniform_starts(10**6)
    est = random_entropy(k, BINARY, xs, n_max=12)
    H, _ = block_entropies(_binary_digits(xs, 12), 12)
    assert np.allclose(est.curve_array[:, 1], H / np.arange(1, 13), atol=1e-12)
    assert est.value == pytest.approx(LOG2, rel=0.05)
    assert est.n_used == 12


def _rotation_arc_entropy(n):
    # the n-fold join of the binary partition under rotation is cut at -k alpha and 1/2 - k alpha
    k = np.arange(n)
    cuts = np.sort(np.r_[(-k * ALPHA) % 1.0, (0.5 - k * ALPHA) % 1.0])
    arcs = np.diff(np.r_[cuts, cuts[0] + 1.0])
    return shannon(arcs)


def test_rotation_entropy_matches_arc_oracle():
    k = DeltaKernel(make_map("rotation"))
    est = random_entropy(k, BINARY, uniform_starts(10**5, 3), n_max=20)
    assert est.n_used == 20
    curve = est.curve_array
    for n, rate in curve:
        assert rate * n == pytest.approx(_rotation_arc_entropy(int(n)), abs=0.02)
    assert est.value < 0.2
    # sublinear growth of H_n
    assert curve[-1, 1] < curve[4, 1] < curve[0, 1]


def test_doubling_with_noise_entropy():
    k = AdditiveKernel(make_map("circle_doubling"), 0.05)
    est = random_entropy(k, BINARY, uniform_starts(10**6, 1), n_max=12)
    assert est.value == pytest.approx(LOG2, rel=0.05)


def test_insufficient_samples():
    k = DeltaKernel(make_map("circle_doubling"))
    with pytest.raises(InsufficientSamplesError, match="larger sample"):
        random_entropy(k, BINARY, uniform_starts(150), n_max=5)


def test_callable_starts_and_omega_average():
    k = AdditiveKernel(make_map("rotation"), 0.05)
    est = random_entropy(k, BINARY, lambda rng: rng.random(20_000), n_max=8, n_omega=3, seed=4)
    assert est.omega_samples == 3
    assert len(est.stderr) == est.n_used and np.all(np.isfinite(est.stderr))


@pytest.mark.parametrize("name", ["doubling_additive", "rotation_additive", "trap",
                                  "interval_contraction_additive"])
def test_block_entropy_subadditive(name):
    k = builtin_kernel(name)
    xi = partition_catalog(k.space)[0]
    sampler = stationary_sampler(k, n_bins=500, samples=50_000)
    S = _symbol_matrix(k, xi, sampler(np.random.default_rng(0)), 0, 0, 12)
    H, _ = block_entropies(S, 12, floor=1)
    H = np.r_[0.0, H]
    for m in range(1, len(H)):
        for n in range(1, len(H) - m):
            assert H[m + n] <= H[m] + H[n] + 1e-9


def test_generating_check_doubling():
    rep = generating_check(DeltaKernel(make_map("circle_doubling")), BINARY, 10)
    assert np.allclose(rep.diameters, 2.0 ** -(rep.depths + 1.0), rtol=1e-12)


def test_generating_check_rotation_and_identity():
    rot = generating_check(DeltaKernel(make_map("rotation")), BINARY, 12)
    assert rot.diameters[-1] > 0.05
    # cells are arcs between the 2(d+1) cut points, so the diameter is at least 1/(2(d+1))
    assert np.all(rot.diameters >= 1 / (2 * (rot.depths + 1)))
    ident = generating_check(DeltaKernel(make_map("circle_identity")), BINARY, 6)
    assert np.allclose(ident.diameters, 0.5)


def test_entropy_gap_doubling_equality():
    gap = entropy_formula_gap(builtin_kernel("doubling_additive"), uniform_starts(200_000, 2))
    assert gap.lambda_plus == pytest.approx(LOG2, abs=1e-12)
    assert gap.h == pytest.approx(LOG2, rel=0.05)
    assert abs(gap.gap) < 0.05


def test_entropy_gap_rotation():
    gap = entropy_formula_gap(builtin_kernel("rotation_additive"), uniform_starts(200_000, 2))
    assert gap.lambda_plus == 0.0
    assert gap.h < 0.05 and abs(gap.gap) < 0.05


def test_entropy_gap_trap():
    k = DegenerateTrapKernel(0.01)
    sampler = stationary_sampler(k, n_bins=2000, samples=100_000)
    gap = entropy_formula_gap(k, sampler)
    assert gap.lambda_plus == 0.0
    assert gap.h < 0.05
    assert gap.gap >= -0.05


def test_block_entropy_estimator():
    X = _binary_digits(uniform_starts(200_000, 5), 10)
    est = BlockEntropyEstimator(n_max=10).fit(X)
    assert est.entropy_ == pytest.approx(LOG2, rel=0.01)
    assert len(est.transform(X)) == 10
    with pytest.raises(ValueError):
        BlockEntropyEstimator().fit(X[:10])
