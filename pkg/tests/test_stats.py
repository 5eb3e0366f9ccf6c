import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hibp import FeatureAllocation, FeatureColumn, ParameterError, ScoreVector, sample_allocation
from hibp.stats import chi_square_gof, fof, fof_slope, fof_to_csv, two_sample_test

from conftest import small_config, tied_config


def _alloc():
    cfg = small_config("poisson", (2, 3))
    sv = lambda rows, vals: ScoreVector(rows, vals)
    cols = (FeatureColumn(0.1, ((sv((0,), (2,)),), (sv((0, 2), (1, 1)), sv((1,), (3,))))),
            FeatureColumn(0.2, ((sv((1,), (1,)),), ())),
            FeatureColumn(0.3, ((), (sv((2,), (1,)),))))
    return FeatureAllocation(cfg, cols)


def test_fof_levels():
    a = _alloc()
    assert fof(a, "total") == {1: 2, 3: 1}
    assert fof(a, "group", 1) == {1: 1, 2: 1}
    assert fof(a, "dense") == {1: 2, 7: 1}
    assert fof_to_csv({1: 2, 3: 1}) == "count,frequency\n1,2\n3,1\n"
    with pytest.raises(ParameterError):
        fof(a, "group")
    with pytest.raises(ParameterError):
        fof(a, "rows")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fof_totals(seed):
    a = sample_allocation(small_config("poisson", (2, 3)), np.random.default_rng(seed))
    f = fof(a)
    assert sum(f.values()) == a.r
    assert sum(c * m for c, m in f.items()) == a.n


def test_fof_slope_of_power_law():
    f = {c: int(round(1e6 * c ** -1.7)) for c in range(1, 30)}
    assert fof_slope(f) == pytest.approx(-1.7, abs=0.01)
    assert np.isnan(fof_slope({1: 4}))


def test_fof_slope_steeper_for_larger_alpha():
    rng = np.random.default_rng(0)
    s = [fof_slope(fof(sample_allocation(tied_config(alpha=a, theta0=5, theta=5, M=500), rng)))
         for a in (0.1, 0.7)]
    assert s[1] < s[0]


def test_chi_square_calibrated_under_null():
    rng = np.random.default_rng(0)
    pmf = lambda k: stats.poisson.pmf(k, 3.0)
    ps = [chi_square_gof(rng.poisson(3.0, 400), pmf, support_min=0) for _ in range(200)]
    assert stats.kstest(ps, "uniform").pvalue > 1e-3


def test_chi_square_rejects_wrong_pmf():
    x = np.full(500, 2)
    x[:250] = 3
    assert chi_square_gof(x, lambda k: stats.poisson.pmf(k, 3.0), support_min=0) < 1e-6


def test_chi_square_input_errors():
    with pytest.raises(ParameterError):
        chi_square_gof(np.zeros(10, int), lambda k: 1.0)
    with pytest.raises(ParameterError):
        chi_square_gof(np.ones(200, int), lambda k: 1.0 if k == 1 else 0.0)


def test_two_sample_examples():
    a = np.random.default_rng(1).poisson(4.0, 1000)
    assert two_sample_test(a, a) == 1.0
    assert two_sample_test(np.zeros(500, int), np.full(500, 10)) < 1e-10
    assert two_sample_test(np.ones(50, int), np.ones(80, int)) == 1.0
    rng = np.random.default_rng(2)
    ps = [two_sample_test(rng.poisson(2.0, 300), rng.poisson(2.0, 500)) for _ in range(150)]
    assert stats.kstest(ps, "uniform").pvalue > 1e-3
