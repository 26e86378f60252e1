import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sizebench import sizing as sz
from sizebench.errors import DomainError, ValidationError

import oracles


def test_kelly_growth_examples():
    assert sz.kelly_growth(0.5, 0.0) == 0.0
    for g in (-0.9, -0.3, 0.1, 0.7):
        assert sz.kelly_growth(0.5, g) == pytest.approx(0.5 * math.log(1 - g * g), abs=1e-15)
        assert sz.kelly_growth(0.5, g) <= 0
    assert sz.kelly_growth(0.6, 0.2) == pytest.approx(0.020135513550688863, abs=1e-15)
    with pytest.raises(DomainError):
        sz.kelly_growth(0.6, 1.0)


def test_kelly_optimal_examples():
    g, gamma = sz.kelly_optimal(0.6)
    assert g == pytest.approx(0.2, abs=1e-15)
    assert gamma == pytest.approx(sz.kelly_growth(0.6, 0.2), abs=1e-15)
    assert gamma == pytest.approx(0.020136, abs=5e-7)
    grid = np.arange(-0.99, 0.99, 1e-4)
    vals = 0.6 * np.log1p(grid) + 0.4 * np.log1p(-grid)
    assert gamma >= vals.max() - 1e-15
    g, gamma = sz.kelly_optimal(0.5 + 1e-12)
    assert abs(g) < 1e-11 and abs(gamma) < 1e-11
    assert sz.kelly_optimal(1.0) == (1.0, math.log(2.0))
    with pytest.raises(DomainError):
        sz.kelly_optimal(0.5)


@pytest.mark.parametrize("p", np.round(np.arange(0.51, 0.991, 0.04), 2))
def test_kelly_optimum_is_grid_argmax(p):
    assert sz.kelly_optimal(p)[0] == pytest.approx(oracles.kelly_grid_argmax(p), abs=2e-5)


def test_kelly_capital_path():
    params = sz.KellyParams(0.6, 0.2, 100.0)
    c = sz.kelly_capital_path(params, 6, 10)
    assert c == pytest.approx(oracles.iterated_capital(100.0, 0.2, 6, 10), rel=1e-13)
    assert round(c, 1) == 122.3
    assert sz.kelly_capital_path(sz.KellyParams(0.6, 0.0, 7.0), 3, 9) == 7.0
    assert sz.kelly_capital_path(params, 5, 5) == pytest.approx(100 * 1.2 ** 5, rel=1e-14)
    with pytest.raises(DomainError):
        sz.KellyParams(0.6, -1.0)
    with pytest.raises(DomainError):
        sz.kelly_capital_path(params, 4, 3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-0.95, 0.95))
def test_growth_strictly_concave(p, g0):
    h = 1e-3
    second = sz.kelly_growth(p, g0 - h) - 2 * sz.kelly_growth(p, g0) + sz.kelly_growth(p, g0 + h)
    assert second < 0


def test_min_variance_examples():
    np.testing.assert_allclose(sz.min_variance_weights(np.eye(4)).weights, 0.25, rtol=1e-15)
    w = sz.min_variance_weights(np.diag([1.0, 4.0])).weights
    np.testing.assert_allclose(w, [0.8, 0.2], rtol=1e-14)
    # simplex grid oracle for the fully-invested minimum
    grid = np.linspace(-1, 2, 30001)
    var = grid ** 2 * 1 + (1 - grid) ** 2 * 4
    assert grid[np.argmin(var)] == pytest.approx(0.8, abs=1e-4)
    assert sz.min_variance_weights([[2.5]]).weights.tolist() == [1.0]


def test_min_variance_errors_and_ridge():
    with pytest.raises(sz.NonSymmetric):
        sz.min_variance_weights([[1.0, 0.5], [0.0, 1.0]])
    # rank-deficient matrix is rescued by the ridge
    v = np.array([1.0, 2.0, 3.0])
    w = sz.min_variance_weights(np.outer(v, v) + 0.0)
    assert w.net == pytest.approx(1.0) and np.all(np.isfinite(w.weights))
    with pytest.raises(sz.SingularCovariance):
        sz.min_variance_weights(np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(1e-4, 1e4))
def test_min_variance_scale_invariant_and_optimal(seed, k, c):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(k, k + 2))
    S = A @ A.T / (k + 2) + 0.1 * np.eye(k)
    w = sz.min_variance_weights(S).weights
    np.testing.assert_allclose(sz.min_variance_weights(c * S).weights, w, rtol=1e-8, atol=1e-10)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    # any fully-invested perturbation has no lower variance
    d = rng.normal(size=k)
    d -= d.mean()
    assert (w + 0.01 * d) @ S @ (w + 0.01 * d) >= w @ S @ w - 1e-14


def test_target_positions_examples():
    longs = [f"L{i}" for i in range(5)]
    shorts = [f"S{i}" for i in range(5)]
    pol = sz.SizingPolicy(long_pct=0.10, short_pct=0.10)
    w = sz.target_positions(pol, longs, shorts, 1e7)
    np.testing.assert_allclose(w.weights, [0.02] * 5 + [-0.02] * 5, rtol=1e-15)
    w = sz.target_positions(sz.SizingPolicy(long_pct=0.10, short_pct=0.20), longs, shorts, 1e7)
    assert w.gross == pytest.approx(0.30, abs=1e-15) and w.net == pytest.approx(-0.10, abs=1e-15)
    w = sz.target_positions(pol, ["A"], [], 1.0)
    assert w.weights.tolist() == [0.10] and w.tickers == ("A",)
    with pytest.raises(ValidationError):
        sz.target_positions(pol, ["A"], ["A"], 1.0)
    with pytest.raises(ValidationError):
        sz.target_positions(pol, ["A"], [], 0.0)


def test_kelly_and_min_variance_policies():
    kelly = sz.SizingPolicy("kelly", 0.2, 0.2, {"kelly_p": 0.6})
    w = sz.target_positions(kelly, ["A", "B"], ["C"], 1.0)
    np.testing.assert_allclose(w.weights, [0.02, 0.02, -0.04], rtol=1e-14)
    with pytest.raises(DomainError):
        sz.SizingPolicy("kelly", 0.2, 0.2, {"kelly_p": 0.4})
    mv = sz.SizingPolicy("min_variance", 0.1, 0.1)
    w = sz.target_positions(mv, ["A", "B"], ["C", "D"], 1.0, cov_long=np.diag([1.0, 4.0]))
    np.testing.assert_allclose(w.weights, [0.08, 0.02, -0.05, -0.05], rtol=1e-14)
    with pytest.raises(ValidationError):
        sz.SizingPolicy(long_pct=1.0, short_pct=0.9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.75), st.floats(0, 0.75), st.integers(1, 20), st.integers(1, 20))
def test_gross_equals_book_sum(lp, sp, nl, ns):
    pol = sz.SizingPolicy(long_pct=lp, short_pct=sp)
    w = sz.target_positions(pol, [f"L{i}" for i in range(nl)], [f"S{i}" for i in range(ns)], 1e6)
    assert w.gross == pytest.approx(lp + sp, abs=1e-14)
    assert w.long_exposure == pytest.approx(lp, abs=1e-14)
    assert w.short_exposure == pytest.approx(sp, abs=1e-14)
