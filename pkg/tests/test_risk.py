import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sizebench import risk
from sizebench.errors import DateMisalignment, DomainError, InsufficientData
from sizebench.market_data import ReturnSeries, business_days

import oracles


def series(values, start="2010-01-04"):
    values = np.asarray(values, float)
    return ReturnSeries("X", business_days(start, values.size), values, "log")


def test_parametric_examples():
    p = risk.DistributionParams(0.0, 1.0)
    v = risk.parametric_var(p, risk.VarConfig(0.05, "long"))
    assert v == pytest.approx(oracles.normal_quantile(0.05), abs=1e-12)
    assert round(v, 5) == -1.64485
    for side in ("long", "short"):
        assert risk.parametric_var(p, risk.VarConfig(0.5, side)) == pytest.approx(0.0, abs=1e-15)
    v = risk.parametric_var(risk.DistributionParams(0.001, 0.02), risk.VarConfig(0.05, "short"))
    assert v == pytest.approx(0.001 - oracles.normal_quantile(0.05) * 0.02, abs=1e-13)
    assert round(v, 5) == 0.03390


def test_student_t_is_unit_variance():
    from scipy import stats

    df = 5.0
    k = risk.standardized_quantile(0.05, "student_t", df)
    # P(X <= k) for X = T * sqrt((df-2)/df), which has unit variance
    assert stats.t.cdf(k / np.sqrt((df - 2) / df), df) == pytest.approx(0.05, abs=1e-12)
    assert stats.t.var(df) * (df - 2) / df == pytest.approx(1.0)
    with pytest.raises(DomainError):
        risk.DistributionParams(0.0, 1.0, "student_t", 2.0)


def test_invalid_params():
    with pytest.raises(DomainError):
        risk.DistributionParams(0.0, 0.0)
    with pytest.raises(DomainError):
        risk.VarConfig(alpha=1.0)
    with pytest.raises(DomainError):
        risk.rolling_var(series(np.zeros(100)), risk.VarConfig(alpha=0.6, window=30))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.01, 0.01), st.floats(1e-4, 0.1), st.floats(0.001, 0.49), st.floats(0.001, 0.49))
def test_monotone_in_alpha(mu, sigma, a1, a2):
    a1, a2 = sorted((a1, a2))
    p = risk.DistributionParams(mu, sigma)
    assert risk.parametric_var(p, risk.VarConfig(a1)) <= risk.parametric_var(p, risk.VarConfig(a2)) + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 0.1), st.floats(0.001, 0.49), st.sampled_from([None, 3.0, 8.0]))
def test_long_short_symmetry(sigma, alpha, df):
    family = "normal" if df is None else "student_t"
    p = risk.DistributionParams(0.0, sigma, family, df)
    lo = risk.parametric_var(p, risk.VarConfig(alpha, "long"))
    hi = risk.parametric_var(p, risk.VarConfig(alpha, "short"))
    assert hi == pytest.approx(-lo, rel=1e-12)


def test_rolling_thresholds_concentrate():
    rng = np.random.default_rng(5)
    sigma = 0.015
    v = risk.rolling_var(series(rng.normal(0, sigma, 5000)), risk.VarConfig(window=250))
    target = oracles.normal_quantile(0.05) * sigma
    assert abs(v.var_values.mean() / target - 1) < 0.05
    assert v.dates.size == 4750


def test_rolling_constant_window_degenerates_to_mean():
    r = series(np.full(60, 0.002))
    with pytest.warns(RuntimeWarning):
        v = risk.rolling_var(r, risk.VarConfig(window=30))
    np.testing.assert_allclose(v.var_values, 0.002, rtol=1e-12)
    assert v.warning
    with pytest.warns(RuntimeWarning):
        h = risk.rolling_var(r, risk.VarConfig(window=30, method="historical"))
    assert np.all(h.var_values == 0.002) and h.warning


def test_rolling_historical_matches_sorted_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_t(4, 400) * 0.01
    for side, prob in (("long", 0.05), ("short", 0.95)):
        v = risk.rolling_var(series(x), risk.VarConfig(0.05, side, "historical", 100))
        for j, t in enumerate(range(100, 400)):
            assert v.var_values[j] == pytest.approx(oracles.type7_quantile(x[t - 100:t].tolist(), prob),
                                                    abs=1e-15)


def test_rolling_needs_data():
    with pytest.raises(InsufficientData):
        risk.rolling_var(series(np.zeros(30)), risk.VarConfig(window=30))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(40, 119), st.sampled_from(["parametric", "historical"]))
def test_no_look_ahead(seed, t, method):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.01, 120)
    cfg = risk.VarConfig(window=30, method=method)
    base = risk.rolling_var(series(x), cfg)
    y = x.copy()
    y[t] += rng.normal(0, 1.0)
    bumped = risk.rolling_var(series(y), cfg)
    upto = np.arange(base.dates.size) + 30 <= t
    np.testing.assert_array_equal(base.var_values[upto], bumped.var_values[upto])


def test_hit_examples():
    r = series([0.01, 0.02, -0.03, 0.0])
    v = risk.VarSeries(r.dates, np.full(4, -0.5), risk.VarConfig())
    assert risk.hit_sequence(r, v).hits.tolist() == [0, 0, 0, 0]
    v = risk.VarSeries(r.dates, [-0.02, -0.02, -0.03, -0.01], risk.VarConfig())
    assert risk.hit_sequence(r, v).hits.tolist() == [0, 0, 1, 0]
    short = risk.VarSeries(r.dates, [0.01, 0.03, 0.0, 0.0], risk.VarConfig(side="short"))
    assert risk.hit_sequence(r, short).hits.tolist() == [1, 0, 0, 1]
    bad = risk.VarSeries(business_days("2030-01-01", 2), [0.0, 0.0], risk.VarConfig())
    with pytest.raises(DateMisalignment):
        risk.hit_sequence(r, bad)


def test_planted_breaches():
    n, alpha = 1000, 0.05
    rng = np.random.default_rng(1)
    x = rng.uniform(0.0, 0.01, n)
    planted = rng.choice(n, int(np.ceil(alpha * n)), replace=False)
    x[planted] = -0.05
    r = series(x)
    v = risk.constant_var(r.dates, risk.DistributionParams(0.0, 0.01), risk.VarConfig(alpha))
    h = risk.hit_sequence(r, v)
    assert h.count == 50 and set(np.flatnonzero(h.hits)) == set(planted)


def test_coverage_with_true_parameters():
    rng = np.random.default_rng(7)
    r = series(rng.standard_normal(10_000))
    v = risk.constant_var(r.dates, risk.DistributionParams(0.0, 1.0), risk.VarConfig(0.05))
    freq = risk.hit_sequence(r, v).hits.mean()
    assert 0.0435 <= freq <= 0.0565


def test_var_loss_sign():
    d = business_days("2020-01-01", 2)
    assert risk.var_loss(risk.VarSeries(d, [-0.02, -0.01], risk.VarConfig())).tolist() == [0.02, 0.01]
    assert risk.var_loss(risk.VarSeries(d, [0.02, 0.01], risk.VarConfig(side="short"))).tolist() == [0.02, 0.01]


def test_no_warning_on_random_windows():
    rng = np.random.default_rng(2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not risk.rolling_var(series(rng.normal(size=100)), risk.VarConfig(window=30)).warning
