import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sizebench import indicators as ind
from sizebench import market_data as md


def bars_from(close, high=None, low=None, volume=None, open_=None):
    close = np.asarray(close, float)
    n = close.size
    open_ = close if open_ is None else np.asarray(open_, float)
    high = np.maximum(open_, close) if high is None else np.asarray(high, float)
    low = np.minimum(open_, close) if low is None else np.asarray(low, float)
    volume = np.full(n, 1000.0) if volume is None else np.asarray(volume, float)
    return md.BarSeries("X", md.business_days("2022-01-03", n), open_, high, low, close, close, volume)


def random_bars(rng, n):
    close = 50 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))
    open_ = close * np.exp(rng.normal(0, 0.01, n))
    high = np.maximum(open_, close) * (1 + rng.uniform(0, 0.02, n))
    low = np.minimum(open_, close) * (1 - rng.uniform(0, 0.02, n))
    vol = rng.uniform(0, 1e6, n)
    vol[rng.random(n) < 0.05] = 0.0
    return bars_from(close, high, low, vol, open_)


def defined(x):
    return x[~np.isnan(x)]


# --------------------------------------------------------------------------
# Hand fixtures
# --------------------------------------------------------------------------
def test_sma_fixtures():
    out = ind.sma(np.array([5.0, 5, 5, 5]), 2)["value"]
    assert np.isnan(out[0]) and out[1:].tolist() == [5, 5, 5]
    assert ind.sma(np.array([1.0, 2, 3, 4]), 2)["value"][1:].tolist() == [1.5, 2.5, 3.5]
    x = np.array([3.0, 1, 4, 1, 5])
    out = ind.sma(x, 5)
    assert out.warmup == 4 and out["value"][-1] == x.mean()
    with pytest.raises(ind.WindowTooLarge):
        ind.sma(x, 6)


def test_ema_fixtures():
    assert defined(ind.ema(np.full(8, 3.25), 3)["value"]).tolist() == [3.25] * 6
    x = np.array([1.0, 4, 2, 8])
    assert ind.ema(x, 1)["value"].tolist() == x.tolist()
    out = ind.ema(np.array([1.0, 2, 3]), 2)["value"]
    assert out[1] == 1.5 and out[2] == pytest.approx(2.5, abs=1e-15)


def test_rsi_fixtures():
    assert defined(ind.rsi(np.arange(1.0, 30.0), 14)["value"]).tolist() == [100.0] * 15
    assert defined(ind.rsi(np.arange(30.0, 1.0, -1), 14)["value"]).tolist() == [0.0] * 15
    alt = 10 + np.array([0, 1] * 15, float)
    assert np.allclose(defined(ind.rsi(alt, 4)["value"]), 50.0)
    assert defined(ind.rsi(np.full(10, 7.0), 3)["value"]).tolist() == [50.0] * 7


def test_bollinger_fixtures():
    b = ind.bollinger(np.full(6, 2.0), 3)
    assert np.array_equal(defined(b["upper"]), defined(b["lower"]))
    b = ind.bollinger(np.array([1.0, 3.0]), 2, k=2.0)
    assert (b["mid"][1], b["upper"][1], b["lower"][1]) == (2.0, 4.0, 0.0)


def test_stochastic_fixtures():
    s = bars_from([10, 11, 12, 13], high=[10, 11, 12, 13], low=[9, 10, 11, 12])
    assert ind.stochastic_k(s, 4)["value"][-1] == 100.0
    s = bars_from([10, 11, 12, 9], high=[10, 11, 12, 13], low=[9, 10, 11, 9])
    assert ind.stochastic_k(s, 4)["value"][-1] == 0.0
    s = bars_from([10, 10, 10, 11], high=[12, 12, 12, 12], low=[10, 10, 10, 10])
    assert ind.stochastic_k(s, 4)["value"][-1] == 50.0
    flat = bars_from([5.0] * 4)
    assert ind.stochastic_k(flat, 4)["value"][-1] == 50.0


def test_mfi_fixtures():
    up = bars_from(np.arange(10.0, 30.0))
    assert defined(ind.mfi(up, 14)["value"]).tolist() == [100.0] * 6
    down = bars_from(np.arange(30.0, 10.0, -1))
    assert defined(ind.mfi(down, 14)["value"]).tolist() == [0.0] * 6
    # +1 then -1 typical-price moves with equal raw flow: 10 -> 11 (flow 11) -> 10 (flow 10)...
    close = np.array([10.0, 11.0, 10.0])
    vol = np.array([1.0, 10.0, 11.0])  # flows: 11*10 = 110 up, 10*11 = 110 down
    assert ind.mfi(bars_from(close, volume=vol), 2)["value"][-1] == 50.0


def test_aux_fixtures():
    s = bars_from(np.r_[np.full(25, 10.0), 12.0], high=np.r_[np.full(25, 10.5), 13.0])
    assert ind.compute_indicator("aroon", s)["up"][-1] == 100.0
    flat = bars_from(np.full(40, 20.0))
    assert ind.compute_indicator("pvt", flat)["value"].tolist() == [0.0] * 40
    k = ind.compute_indicator("keltner", flat)
    assert np.array_equal(defined(k["upper"]), defined(k["mid"]))
    assert np.array_equal(defined(k["lower"]), defined(k["mid"]))


def test_aroon_tie_takes_most_recent():
    high = np.array([5.0, 9, 1, 9, 2])
    s = bars_from(np.minimum(high, 4.0), high=high, low=np.full(5, 0.5))
    out = ind.aroon(s, 4)
    assert out["up"][-1] == 100.0 * (4 - 1) / 4


def test_parabolic_sar_hand_recursion():
    high = np.array([10.0, 11, 12, 13, 12.5, 11])
    low = np.array([9.0, 10, 11, 12, 11.0, 9.5])
    close = np.array([9.5, 10.5, 11.5, 12.5, 11.5, 10])
    out = ind.parabolic_sar(bars_from(close, high=high, low=low))["value"]
    # uptrend: sar0 = low0 = 9, ep = 11, af = 0.02
    sar = 9.0
    sar2 = min(sar + 0.02 * (11 - sar), low[1], low[0])  # 9.04 capped by 9 -> 9
    assert out[1] == 9.0 and out[2] == sar2
    # ep 12 af 0.04 at t=2; t=3: sar = 9 + 0.04 * 3 = 9.12
    assert out[3] == pytest.approx(min(sar2 + 0.04 * (12 - sar2), low[2], low[1]), abs=1e-12)


def test_ichimoku_shapes_and_displacement():
    rng = np.random.default_rng(2)
    s = random_bars(rng, 120)
    out = ind.compute_indicator("ichimoku", s)
    assert out.warmup == 77
    t9 = ind._midrange(s.high, s.low, 9, 120)
    k26 = ind._midrange(s.high, s.low, 26, 120)
    assert out["senkou_a"][100] == pytest.approx(0.5 * (t9[74] + k26[74]), abs=1e-12)
    assert np.array_equal(out["chikou"][77:], s.close[77:])


def test_dispatch_errors():
    s = bars_from(np.full(60, 10.0))
    with pytest.raises(ind.UnknownKind):
        ind.compute_indicator("macd", s)
    with pytest.raises(ind.MissingParam):
        ind.compute_indicator("cmf", s, {"window": None})
    with pytest.raises(ind.ValidationError):
        ind.compute_indicator("cmf", s, {"span": 3})
    with pytest.raises(ind.InsufficientData):
        ind.compute_indicator("ichimoku", bars_from(np.full(60, 10.0)))


def test_csv_output(tmp_path):
    s = bars_from(np.arange(1.0, 6.0))
    ind.bollinger(s, 3).to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "date,upper,mid,lower"
    assert lines[1].endswith(",,,") and lines[3].count(",") == 3 and ",," not in lines[3]


# --------------------------------------------------------------------------
# Properties
# --------------------------------------------------------------------------
BOUNDED = [("rsi", "value", 0, 100), ("mfi", "value", 0, 100), ("stochastic_k", "value", 0, 100),
           ("aroon", "up", 0, 100), ("aroon", "down", 0, 100), ("aroon", "oscillator", -100, 100)]
BANDS = ("bollinger", "keltner", "acceleration_bands")


def check_invariants(s):
    for kind in ind.ALL_KINDS:
        out = ind.indicator_by_name(kind, s)
        for ch, arr in out.channels.items():
            assert np.all(np.isnan(arr[:out.warmup])), (kind, ch)
            assert np.all(np.isfinite(arr[out.warmup:])), (kind, ch)
    for kind, ch, lo, hi in BOUNDED:
        v = defined(ind.indicator_by_name(kind, s)[ch])
        assert np.all((v >= lo) & (v <= hi)), kind
    for kind in BANDS:
        out = ind.indicator_by_name(kind, s)
        w = out.warmup
        assert np.all(out["lower"][w:] <= out["mid"][w:] + 1e-12)
        assert np.all(out["mid"][w:] <= out["upper"][w:] + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(80, 160))
def test_bounds_and_bands(seed, n):
    check_invariants(random_bars(np.random.default_rng(seed), n))


WINDOWED = ("sma", "rsi", "bollinger", "stochastic_k", "mfi", "aroon", "cmf")
RECURSIVE = ("ema", "pvt", "parabolic_sar", "keltner")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_append_does_not_rewrite_history(seed):
    rng = np.random.default_rng(seed)
    full = random_bars(rng, 90)
    head = full.take(np.arange(89))
    for kind in WINDOWED + RECURSIVE:
        a = ind.indicator_by_name(kind, head)
        b = ind.indicator_by_name(kind, full)
        for ch in a.channels:
            np.testing.assert_array_equal(a[ch], b[ch][:89])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_scale_behaviour(seed, c):
    s = random_bars(np.random.default_rng(seed), 80)
    scaled = md.BarSeries("X", s.dates, s.open * c, s.high * c, s.low * c, s.close * c,
                          s.adj_close * c, s.volume)
    for kind, ch in (("rsi", "value"), ("stochastic_k", "value"), ("aroon", "up"), ("cmf", "value")):
        np.testing.assert_allclose(ind.indicator_by_name(kind, scaled)[ch],
                                   ind.indicator_by_name(kind, s)[ch], rtol=1e-9, atol=1e-9)
    for kind in ("sma", "ema", "bollinger", "keltner", "acceleration_bands"):
        a, b = ind.indicator_by_name(kind, scaled), ind.indicator_by_name(kind, s)
        for ch in a.channels:
            np.testing.assert_allclose(a[ch], c * b[ch], rtol=1e-9)
