"""Technical indicators as pure windowed transforms.

Every function returns an :class:`IndicatorSeries`. Entries before
``warmup`` are NaN (undefined), never zero-filled; later entries are finite.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .errors import InsufficientData, ValidationError
from .market_data import BarSeries


class WindowTooLarge(InsufficientData):
    pass


class UnknownKind(ValidationError):
    pass


class MissingParam(ValidationError):
    pass


@dataclass(frozen=True)
class IndicatorSeries:
    name: str
    params: dict
    dates: np.ndarray | None
    channels: dict[str, np.ndarray]
    warmup: int

    def __post_init__(self):
        lengths = {v.shape[0] for v in self.channels.values()}
        if len(lengths) != 1:
            raise ValidationError(f"{self.name}: channels differ in length")
        if self.dates is not None and self.dates.shape[0] not in lengths:
            raise ValidationError(f"{self.name}: dates and channels differ in length")

    def __len__(self) -> int:
        return next(iter(self.channels.values())).shape[0]

    def __getitem__(self, channel: str) -> np.ndarray:
        return self.channels[channel]

    @property
    def values(self) -> np.ndarray:
        """The single channel of a one-channel indicator."""
        if len(self.channels) != 1:
            raise ValidationError(f"{self.name} has channels {list(self.channels)}")
        return next(iter(self.channels.values()))

    def to_csv(self, path: str | Path) -> None:
        names = list(self.channels)
        n = len(self)
        dates = self.dates if self.dates is not None else np.arange(n)
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date"] + names)
            for i in range(n):
                row = [str(dates[i])]
                for c in names:
                    x = self.channels[c][i]
                    row.append("" if np.isnan(x) else repr(float(x)))
                w.writerow(row)


def _series(name, params, dates, warmup, **channels) -> IndicatorSeries:
    out = {}
    for key, arr in channels.items():
        arr = np.asarray(arr, dtype=float).copy()
        arr[:warmup] = np.nan
        out[key] = arr
    return IndicatorSeries(name, dict(params), dates, out, warmup)


def _as_prices(series) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(series, BarSeries):
        return series.close, series.dates
    return np.asarray(series, dtype=float), None


def _rolling(x: np.ndarray, window: int) -> np.ndarray:
    """(n - window + 1, window) view of trailing windows."""
    return sliding_window_view(x, window)


def _pad_front(values: np.ndarray, n: int) -> np.ndarray:
    out = np.full(n, np.nan)
    out[n - values.shape[0]:] = values
    return out


def _check_window(window: int, n: int, minimum: int = 1, need: int | None = None):
    if window < minimum:
        raise ValidationError(f"window must be >= {minimum}, got {window}")
    need = window if need is None else need
    if n < need:
        raise WindowTooLarge(f"need at least {need} observations, have {n}")


# --------------------------------------------------------------------------
# Price-sequence indicators
# --------------------------------------------------------------------------
def sma(series, window: int) -> IndicatorSeries:
    p, dates = _as_prices(series)
    _check_window(window, p.size)
    mean = _rolling(p, window).mean(axis=1)
    return _series("sma", {"window": window}, dates, window - 1, value=_pad_front(mean, p.size))


def ema(series, window: int) -> IndicatorSeries:
    p, dates = _as_prices(series)
    _check_window(window, p.size)
    out = _kernels.seeded_ema(p, window, 2.0 / (window + 1.0))
    return _series("ema", {"window": window}, dates, window - 1, value=out)


def rsi(series, window: int = 14) -> IndicatorSeries:
    """Simple-mean RSI: 100 * mean(up) / (mean(up) + mean(down)); 50 on a flat window."""
    p, dates = _as_prices(series)
    _check_window(window, p.size, need=window + 1)
    diff = np.diff(p)
    up = _rolling(np.maximum(diff, 0.0), window).mean(axis=1)
    down = _rolling(np.maximum(-diff, 0.0), window).mean(axis=1)
    denom = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(denom > 0, 100.0 * up / np.where(denom > 0, denom, 1.0), 50.0)
    return _series("rsi", {"window": window}, dates, window, value=_pad_front(val, p.size))


def bollinger(series, window: int = 20, k: float = 2.0) -> IndicatorSeries:
    p, dates = _as_prices(series)
    _check_window(window, p.size, minimum=2)
    if not k > 0:
        raise ValidationError("k must be positive")
    win = _rolling(p, window)
    mid = win.mean(axis=1)
    sd = win.std(axis=1)  # population
    n = p.size
    return _series("bollinger", {"window": window, "k": k}, dates, window - 1,
                   upper=_pad_front(mid + k * sd, n), mid=_pad_front(mid, n),
                   lower=_pad_front(mid - k * sd, n))


# --------------------------------------------------------------------------
# Bar indicators
# --------------------------------------------------------------------------
def stochastic_k(series: BarSeries, window: int = 4) -> IndicatorSeries:
    n = len(series)
    _check_window(window, n)
    hh = _rolling(series.high, window).max(axis=1)
    ll = _rolling(series.low, window).min(axis=1)
    c = series.close[window - 1:]
    rng = hh - ll
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(rng > 0, 100.0 * (c - ll) / np.where(rng > 0, rng, 1.0), 50.0)
    return _series("stochastic_k", {"window": window}, series.dates, window - 1,
                   value=_pad_front(k, n))


def mfi(series: BarSeries, window: int = 14) -> IndicatorSeries:
    n = len(series)
    _check_window(window, n, need=window + 1)
    tp = (series.high + series.low + series.close) / 3.0
    raw = tp * series.volume
    dtp = np.diff(tp)
    pos = np.where(dtp > 0, raw[1:], 0.0)
    neg = np.where(dtp < 0, raw[1:], 0.0)
    pos_sum = _rolling(pos, window).sum(axis=1)
    neg_sum = _rolling(neg, window).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = pos_sum / np.where(neg_sum > 0, neg_sum, 1.0)
        val = np.where(neg_sum > 0, 100.0 - 100.0 / (1.0 + ratio), 100.0)
    return _series("mfi", {"window": window}, series.dates, window, value=_pad_front(val, n))


def aroon(series: BarSeries, window: int = 25) -> IndicatorSeries:
    """Aroon up/down over ``window`` periods (window + 1 bars, current included)."""
    n = len(series)
    _check_window(window, n, need=window + 1)
    hi = _rolling(series.high, window + 1)[:, ::-1]
    lo = _rolling(series.low, window + 1)[:, ::-1]
    # reversed windows: argmax gives bars since the most recent extreme
    since_hi = np.argmax(hi, axis=1)
    since_lo = np.argmin(lo, axis=1)
    up = 100.0 * (window - since_hi) / window
    down = 100.0 * (window - since_lo) / window
    return _series("aroon", {"window": window}, series.dates, window,
                   up=_pad_front(up, n), down=_pad_front(down, n),
                   oscillator=_pad_front(up - down, n))


def pvt(series: BarSeries) -> IndicatorSeries:
    c = series.close
    flow = np.zeros(c.size)
    flow[1:] = series.volume[1:] * (c[1:] - c[:-1]) / c[:-1]
    return _series("pvt", {}, series.dates, 0, value=np.cumsum(flow))


def cmf(series: BarSeries, window: int = 21) -> IndicatorSeries:
    n = len(series)
    _check_window(window, n)
    h, l, c, v = series.high, series.low, series.close, series.volume
    rng = h - l
    with np.errstate(invalid="ignore", divide="ignore"):
        mult = np.where(rng > 0, ((c - l) - (h - c)) / np.where(rng > 0, rng, 1.0), 0.0)
    num = _rolling(mult * v, window).sum(axis=1)
    den = _rolling(v, window).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return _series("cmf", {"window": window}, series.dates, window - 1, value=_pad_front(val, n))


def parabolic_sar(series: BarSeries, af_start: float = 0.02, af_step: float = 0.02,
                  af_max: float = 0.2) -> IndicatorSeries:
    _check_window(2, len(series))
    out = _kernels.parabolic_sar(series.high, series.low, series.close,
                                 float(af_start), float(af_step), float(af_max))
    return _series("parabolic_sar", {"af_start": af_start, "af_step": af_step, "af_max": af_max},
                   series.dates, 1, value=out)


def true_range(series: BarSeries) -> np.ndarray:
    h, l, c = series.high, series.low, series.close
    tr = h - l
    tr[1:] = np.maximum.reduce([h[1:] - l[1:], np.abs(h[1:] - c[:-1]), np.abs(l[1:] - c[:-1])])
    return tr


def keltner(series: BarSeries, ema_window: int = 20, atr_window: int = 10,
            multiplier: float = 2.0) -> IndicatorSeries:
    """EMA(close) mid with bands at +/- multiplier * ATR (Wilder-smoothed)."""
    n = len(series)
    _check_window(max(ema_window, atr_window), n)
    mid = _kernels.seeded_ema(series.close, ema_window, 2.0 / (ema_window + 1.0))
    atr = _kernels.seeded_ema(true_range(series), atr_window, 1.0 / atr_window)
    warm = max(ema_window, atr_window) - 1
    return _series("keltner", {"ema_window": ema_window, "atr_window": atr_window,
                               "multiplier": multiplier}, series.dates, warm,
                   upper=mid + multiplier * atr, mid=mid, lower=mid - multiplier * atr)


def _midrange(high, low, window, n):
    hh = _rolling(high, window).max(axis=1)
    ll = _rolling(low, window).min(axis=1)
    return _pad_front(0.5 * (hh + ll), n)


def ichimoku(series: BarSeries, tenkan: int = 9, kijun: int = 26,
             senkou_b: int = 52) -> IndicatorSeries:
    """Ichimoku lines aligned to the date on which each value is known.

    Senkou spans are displaced forward by ``kijun`` periods (value at t is
    built from bars up to t - kijun). The chikou line is the close; its
    backward displacement is a plotting convention and would otherwise
    require future data.
    """
    n = len(series)
    warm = senkou_b - 1 + kijun
    _check_window(max(tenkan, kijun, senkou_b), n, need=warm + 1)
    h, l = series.high, series.low
    t_line = _midrange(h, l, tenkan, n)
    k_line = _midrange(h, l, kijun, n)
    b_line = _midrange(h, l, senkou_b, n)
    span_a = np.full(n, np.nan)
    span_b = np.full(n, np.nan)
    span_a[kijun:] = 0.5 * (t_line[:-kijun] + k_line[:-kijun])
    span_b[kijun:] = b_line[:-kijun]
    return _series("ichimoku", {"tenkan": tenkan, "kijun": kijun, "senkou_b": senkou_b},
                   series.dates, warm, tenkan=t_line, kijun=k_line, senkou_a=span_a,
                   senkou_b=span_b, chikou=series.close)


def acceleration_bands(series: BarSeries, window: int = 20, factor: float = 4.0) -> IndicatorSeries:
    n = len(series)
    _check_window(window, n)
    h, l = series.high, series.low
    width = factor * (h - l) / (h + l)
    upper = _rolling(h * (1.0 + width), window).mean(axis=1)
    lower = _rolling(l * (1.0 - width), window).mean(axis=1)
    mid = _rolling(series.close, window).mean(axis=1)
    return _series("acceleration_bands", {"window": window, "factor": factor}, series.dates,
                   window - 1, upper=_pad_front(upper, n), mid=_pad_front(mid, n),
                   lower=_pad_front(lower, n))


_DISPATCH = {
    "aroon": (aroon, {"window": 25}),
    "pvt": (pvt, {}),
    "cmf": (cmf, {"window": 21}),
    "parabolic_sar": (parabolic_sar, {"af_start": 0.02, "af_step": 0.02, "af_max": 0.2}),
    "keltner": (keltner, {"ema_window": 20, "atr_window": 10, "multiplier": 2.0}),
    "ichimoku": (ichimoku, {"tenkan": 9, "kijun": 26, "senkou_b": 52}),
    "acceleration_bands": (acceleration_bands, {"window": 20, "factor": 4.0}),
}

DEFAULT_PARAMS: dict[str, dict] = {k: dict(v[1]) for k, v in _DISPATCH.items()}


def compute_indicator(kind: str, series: BarSeries,
                      params: Mapping | None = None) -> IndicatorSeries:
    """Dispatch to one of the auxiliary indicators with defaults filled in."""
    if kind not in _DISPATCH:
        raise UnknownKind(f"unknown indicator {kind!r}; expected one of {sorted(_DISPATCH)}")
    func, defaults = _DISPATCH[kind]
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValidationError(f"{kind}: unknown parameter(s) {sorted(unknown)}")
    merged = {**defaults, **params}
    missing = [k for k, v in merged.items() if v is None]
    if missing:
        raise MissingParam(f"{kind}: missing value for {missing}")
    return func(series, **merged)


ALL_KINDS = ("sma", "ema", "rsi", "bollinger", "stochastic_k", "mfi") + tuple(_DISPATCH)


def indicator_by_name(kind: str, series: BarSeries, params: Mapping | None = None) -> IndicatorSeries:
    """Uniform entry point over every indicator (used by the CLI)."""
    params = dict(params or {})
    if kind in _DISPATCH:
        return compute_indicator(kind, series, params)
    basic = {
        "sma": (lambda s, window=20: sma(s, window)),
        "ema": (lambda s, window=20: ema(s, window)),
        "rsi": (lambda s, window=14: rsi(s, window)),
        "bollinger": (lambda s, window=20, k=2.0: bollinger(s, window, k)),
        "stochastic_k": (lambda s, window=4: stochastic_k(s, window)),
        "mfi": (lambda s, window=14: mfi(s, window)),
    }
    if kind not in basic:
        raise UnknownKind(f"unknown indicator {kind!r}")
    return basic[kind](series, **params)
