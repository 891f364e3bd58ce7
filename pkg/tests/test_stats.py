import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dip_lp, gini_bruteforce, ks_sweep, wilcoxon_exact_p
from polarlens.stats import (bootstrap_median_bca, dip_statistic, dip_test, gini, gini_rows,
                             ks_two_sample, wilcoxon_rank_sum)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- Gini ---------------------------------------------------------------------

def test_gini_reference_values():
    assert gini([1, 1, 1, 1]) == 0.0
    assert gini([1, 0, 0, 0]) == pytest.approx(0.75, abs=1e-15)
    assert gini([3, 0, 1, 7, 2, 0]) == pytest.approx(15 / 26, abs=1e-15)
    # one-hot over six categories, the printed formula tops out at 5/6
    assert gini([0, 0, 6, 0, 0, 0]) == pytest.approx(5 / 6, abs=1e-15)


def test_gini_matches_double_sum():
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.integers(0, 20, size=rng.integers(1, 51)).astype(float)
        if x.sum() == 0:
            continue
        assert abs(gini(x) - gini_bruteforce(x)) < 1e-12


def test_gini_rejects_bad_input():
    with pytest.raises(ValueError, match="undefined mean"):
        gini([0, 0, 0])
    with pytest.raises(ValueError):
        gini([1, -1])
    with pytest.raises(ValueError):
        gini([])


def test_gini_rows_matches_scalar():
    rng = np.random.default_rng(3)
    m = rng.integers(0, 9, size=(40, 6)) + np.eye(40, 6, dtype=int)
    m[m.sum(axis=1) == 0, 0] = 1
    np.testing.assert_allclose(gini_rows(m), [gini(r) for r in m], atol=1e-14)


# zero or well above the subnormal range, so k * x cannot underflow to all zeros
@given(arrays(float, st.integers(1, 30), elements=st.one_of(st.just(0.0), st.floats(1e-6, 1e4))),
       st.floats(1e-3, 1e3))
def test_gini_scale_invariant(x, k):
    if x.sum() <= 0:
        return
    assert abs(gini(k * x) - gini(x)) < 1e-12


@given(arrays(float, st.integers(1, 30), elements=st.floats(0, 1e4)))
def test_gini_range(x):
    if x.sum() <= 0:
        return
    g = gini(x)
    assert -1e-12 <= g <= (x.size - 1) / x.size + 1e-12


# -- dip ----------------------------------------------------------------------

def test_dip_two_atoms():
    assert dip_statistic([0, 1]) == 0.25


@pytest.mark.parametrize("n", [2, 3, 5, 10, 57, 400])
def test_dip_equally_spaced(n):
    assert dip_statistic(np.arange(n)) == pytest.approx(1 / (2 * n), abs=1e-15)


def test_dip_frozen_oracle_values():
    # produced by the LP oracle, kept here as literals
    assert dip_statistic([0.0, 0.3, 0.35, 1.2, 2.0, 2.1, 2.15]) == pytest.approx(23 / 140, abs=1e-12)
    assert dip_statistic([-2.0, -1.9, -1.7, 1.6, 1.8, 2.0]) == pytest.approx(33 / 148, abs=1e-12)


def test_dip_matches_lp_oracle():
    rng = np.random.default_rng(5)
    for trial in range(60):
        n = int(rng.integers(2, 8))
        x = rng.normal(size=n) if trial % 2 else rng.exponential(size=n)
        assert abs(dip_statistic(x) - dip_lp(x)) < 1e-9


def test_dip_duplicated_sample_unchanged():
    x = np.random.default_rng(2).normal(size=50)
    assert dip_statistic(np.repeat(x, 2)) == pytest.approx(dip_statistic(x), abs=1e-15)


def test_dip_constant_sample():
    assert dip_statistic(np.ones(8)) == pytest.approx(1 / 16)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 60), elements=finite, unique=True),
       st.floats(1e-2, 1e2), st.floats(-1e3, 1e3))
def test_dip_affine_invariant(x, a, b):
    assert dip_statistic(a * x + b) == pytest.approx(dip_statistic(x), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 80), elements=finite))
def test_dip_bounds(x):
    d = dip_statistic(x)
    assert 1 / (2 * x.size) - 1e-12 <= d <= 0.25 + 1e-12


def test_dip_errors():
    with pytest.raises(ValueError):
        dip_statistic([1.0])
    with pytest.raises(ValueError):
        dip_test([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        dip_test(np.arange(10.0), n_boot=0)


def test_dip_test_separated_modes():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-5, 0.1, 500), rng.normal(5, 0.1, 500)]
    res = dip_test(x, seed=1)
    assert res.p_value < 0.01
    assert res.n == 1000 and res.n_boot == 2000


def test_dip_test_reproducible_and_thread_independent():
    x = np.random.default_rng(4).normal(size=300)
    a = dip_test(x, n_boot=500, seed=9, threads=1)
    b = dip_test(x, n_boot=500, seed=9, threads=1)
    c = dip_test(x, n_boot=500, seed=9, threads=4)
    assert a == b == c
    assert 0.0 <= a.p_value <= 1.0


# -- KS -------------------------------------------------------------------------

def test_ks_examples():
    a = np.array([1.0, 2.0, 3.0])
    r = ks_two_sample(a, a)
    assert r.statistic == 0.0 and r.p_value == 1.0 and r.method == "KS"
    assert ks_two_sample([1, 2], [3, 4]).statistic == 1.0
    assert ks_two_sample([1, 2, 3, 4, 5], [2.5, 3.5, 6, 7]).statistic == 0.5


def test_ks_statistic_matches_sweep():
    rng = np.random.default_rng(8)
    for _ in range(100):
        a = rng.integers(0, 6, size=rng.integers(1, 9)).astype(float)
        b = rng.integers(0, 6, size=rng.integers(1, 9)).astype(float)
        assert ks_two_sample(a, b).statistic == ks_sweep(a, b)


def test_ks_pvalue_against_scipy_asymptotic():
    # scipy's asymptotic mode omits the effective-n correction, so compare at large n only
    from scipy import stats
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=3000), rng.normal(0.05, 1, size=2500)
    ours = ks_two_sample(a, b)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert ours.p_value == pytest.approx(ref.pvalue, abs=0.01)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(1, 20), elements=finite), arrays(float, st.integers(1, 20), elements=finite))
def test_two_sample_tests_symmetric(a, b):
    assert ks_two_sample(a, b).p_value == ks_two_sample(b, a).p_value
    assert wilcoxon_rank_sum(a, b).p_value == pytest.approx(wilcoxon_rank_sum(b, a).p_value, abs=1e-12)
    for r in (ks_two_sample(a, b), wilcoxon_rank_sum(a, b)):
        assert 0.0 <= r.p_value <= 1.0


def test_two_sample_empty_input():
    for f in (ks_two_sample, wilcoxon_rank_sum):
        with pytest.raises(ValueError):
            f([], [1.0])


# -- Wilcoxon ---------------------------------------------------------------------

def test_wilcoxon_examples():
    assert wilcoxon_rank_sum([1], [2]).p_value == 1.0
    assert wilcoxon_rank_sum([3, 3], [3, 3]).p_value == 1.0
    r = wilcoxon_rank_sum([1.1, 2.3, 0.4, 3.3, 2.8, 1.9], [2.2, 4.1, 3.9, 5.0, 2.9, 3.6])
    # exact permutation p: 24 of 924 splits
    assert abs(r.p_value - 24 / 924) < 0.02
    assert r.method == "Wilcoxon"


def test_wilcoxon_close_to_permutation():
    rng = np.random.default_rng(12)
    for _ in range(40):
        a = rng.normal(size=6)
        b = rng.normal(rng.normal(), 1, size=6)
        assert abs(wilcoxon_rank_sum(a, b).p_value - wilcoxon_exact_p(a, b)) < 0.02


def test_wilcoxon_against_scipy():
    from scipy import stats
    rng = np.random.default_rng(2)
    a = rng.integers(0, 10, 80).astype(float)
    b = rng.integers(1, 11, 70).astype(float)
    ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert wilcoxon_rank_sum(a, b).p_value == pytest.approx(ref.pvalue, rel=1e-10)


# -- BCa ----------------------------------------------------------------------------

def test_bca_constant_sample():
    est = bootstrap_median_bca([5, 5, 5, 5], n_boot=200)
    assert (est.point, est.ci_low, est.ci_high) == (5.0, 5.0, 5.0)
    assert est.degenerate


def test_bca_point_and_order():
    est = bootstrap_median_bca(np.arange(1, 10), n_boot=2000, seed=3)
    assert est.point == 5.0
    assert est.ci_low <= est.point <= est.ci_high
    assert est.method == "BCa" and est.confidence == 0.95


def test_bca_reproducible():
    x = np.random.default_rng(0).lognormal(size=60)
    assert bootstrap_median_bca(x, seed=4) == bootstrap_median_bca(x, seed=4)


def test_bca_close_to_scipy():
    from scipy import stats
    x = np.random.default_rng(6).lognormal(size=120)
    ours = bootstrap_median_bca(x, n_boot=20000, seed=1)
    ref = stats.bootstrap((x,), np.median, n_resamples=20000, method="BCa",
                          random_state=np.random.default_rng(1)).confidence_interval
    width = ref.high - ref.low
    assert abs(ours.ci_low - ref.low) < 0.15 * width
    assert abs(ours.ci_high - ref.high) < 0.15 * width


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=finite))
def test_bca_interval_ordered(x):
    est = bootstrap_median_bca(x, n_boot=300, seed=0)
    assert est.ci_low <= est.ci_high
    assert est.point == np.median(x)


def test_bca_errors():
    with pytest.raises(ValueError):
        bootstrap_median_bca([1.0])
    with pytest.raises(ValueError):
        bootstrap_median_bca([1.0, 2.0], confidence=1.0)
