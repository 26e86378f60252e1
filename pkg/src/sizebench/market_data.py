"""Daily OHLCV data: ingestion, validation, returns, signals, KS screening
and a seeded synthetic regime generator.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DateMisalignment, InsufficientData, ValidationError

PRICE_FIELDS = ("open", "high", "low", "close", "adj_close")
COLUMNS = ("date",) + PRICE_FIELDS + ("volume",)


class MissingColumn(ValidationError):
    pass


class MalformedRow(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptySeries(ValidationError):
    pass


class NonPositivePrice(ValidationError):
    pass


class SeriesTooShort(InsufficientData):
    pass


class ZeroVariance(ValidationError):
    pass


class InvalidRegime(ValidationError):
    pass


@dataclass(frozen=True)
class Bar:
    date: np.datetime64
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float


def _bar_problem(o, h, l, c, adj, vol) -> str | None:
    """Reason string if the bar breaks an OHLCV invariant, else None."""
    prices = (o, h, l, c, adj)
    if not all(math.isfinite(p) for p in prices) or not math.isfinite(vol):
        return "non-finite value"
    if l > h:
        return f"low {l} > high {h}"
    if l > min(o, c) or h < max(o, c):
        return "open/close outside the low-high range"
    if vol < 0:
        return f"negative volume {vol}"
    return None


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Per-ticker daily bars stored column-wise.

    Dates are ``datetime64[D]``, strictly increasing. ``bars`` gives the
    row view as :class:`Bar` records.
    """

    ticker: str
    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        for name in PRICE_FIELDS + ("volume",):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != dates.shape:
                raise ValidationError(f"{self.ticker}: column {name} has wrong length")
            object.__setattr__(self, name, arr)
        if dates.size == 0:
            raise EmptySeries(f"{self.ticker}: no bars")
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValidationError(f"{self.ticker}: dates must be strictly increasing")
        prices = np.stack([getattr(self, f) for f in PRICE_FIELDS])
        if not np.all(np.isfinite(prices)) or not np.all(np.isfinite(self.volume)):
            raise ValidationError(f"{self.ticker}: non-finite values")
        if np.any(prices <= 0):
            raise NonPositivePrice(f"{self.ticker}: prices must be strictly positive")
        if np.any(self.volume < 0):
            raise ValidationError(f"{self.ticker}: negative volume")
        if np.any(self.low > np.minimum(self.open, self.close)) or np.any(
            self.high < np.maximum(self.open, self.close)
        ):
            raise ValidationError(f"{self.ticker}: open/close outside the low-high range")

    def __len__(self) -> int:
        return self.dates.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        return self.ticker == other.ticker and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("dates",) + COLUMNS[1:]
        )

    @property
    def bars(self) -> list[Bar]:
        return [
            Bar(self.dates[i], float(self.open[i]), float(self.high[i]), float(self.low[i]),
                float(self.close[i]), float(self.adj_close[i]), float(self.volume[i]))
            for i in range(len(self))
        ]

    @classmethod
    def from_bars(cls, ticker: str, bars: Iterable[Bar]) -> "BarSeries":
        rows = sorted(bars, key=lambda b: b.date)
        cols = {f: [getattr(b, f) for b in rows] for f in COLUMNS}
        return cls(ticker, **{("dates" if k == "date" else k): v for k, v in cols.items()})

    def take(self, index) -> "BarSeries":
        """Row subset (index array, mask or slice), keeping the ticker."""
        return BarSeries(self.ticker, **{
            ("dates" if f == "date" else f): getattr(self, "dates" if f == "date" else f)[index]
            for f in COLUMNS
        })

    def price(self, field_name: str = "close") -> np.ndarray:
        if field_name not in ("close", "adj_close"):
            raise ValidationError(f"price_field must be close or adj_close, got {field_name!r}")
        return getattr(self, field_name)


@dataclass(frozen=True)
class ReturnSeries:
    ticker: str
    dates: np.ndarray
    values: np.ndarray
    kind: str = "simple"

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape:
            raise ValidationError("dates and values must have equal length")
        if self.kind not in ("simple", "log"):
            raise ValidationError(f"unknown return kind {self.kind!r}")
        if self.kind == "simple" and np.any(values <= -1):
            raise ValidationError("simple returns must exceed -1")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SignalSeries:
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int8)
        if not np.all(np.isin(values, (-1, 0, 1))):
            raise ValidationError("signal values must be in {-1, 0, +1}")
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class KsResult:
    ticker: str
    window: int
    statistic: float
    p_value: float
    n: int = 0


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------
def ingest_csv(path: str | Path, ticker: str | None = None) -> BarSeries:
    """Parse a daily OHLCV file.

    Header names are matched case-insensitively and in any order. Rows are
    sorted by date; on duplicated dates the last row in the file wins.
    """
    path = Path(path)
    ticker = ticker or path.stem
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySeries(f"{path}: empty file") from None
        names = [h.strip().lower().replace(" ", "_") for h in header]
        missing = [c for c in COLUMNS if c not in names]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: names.index(c) for c in COLUMNS}
        rows: dict[np.datetime64, tuple] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                date = np.datetime64(row[idx["date"]].strip(), "D")
                vals = tuple(float(row[idx[c]]) for c in COLUMNS[1:])
            except (ValueError, IndexError) as exc:
                raise MalformedRow(line_no, str(exc)) from None
            if any(v <= 0 for v in vals[:5]):
                raise NonPositivePrice(f"{path}: line {line_no}: non-positive price")
            problem = _bar_problem(*vals)
            if problem:
                raise MalformedRow(line_no, problem)
            rows[date] = vals
    if not rows:
        raise EmptySeries(f"{path}: no data rows")
    dates = sorted(rows)
    table = np.array([rows[d] for d in dates], dtype=float)
    return BarSeries(ticker, np.array(dates, dtype="datetime64[D]"),
                     *(table[:, j] for j in range(6)))


def write_csv(series: BarSeries, path: str | Path) -> None:
    # repr() round-trips floats exactly, which keeps ingest -> write -> ingest lossless
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for i in range(len(series)):
            w.writerow([str(series.dates[i])] + [repr(float(getattr(series, f)[i]))
                                                 for f in COLUMNS[1:]])


def write_ks_table(results: Sequence[KsResult], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "window", "statistic", "p_value"])
        for r in results:
            w.writerow([r.ticker, r.window, repr(r.statistic), repr(r.p_value)])


# --------------------------------------------------------------------------
# Returns and signals
# --------------------------------------------------------------------------
def compute_returns(series: BarSeries, kind: str = "simple",
                    price_field: str = "close") -> ReturnSeries:
    if len(series) < 2:
        raise SeriesTooShort(f"{series.ticker}: need at least 2 bars for returns")
    p = series.price(price_field)
    if kind == "simple":
        values = p[1:] / p[:-1] - 1.0
    elif kind == "log":
        values = np.log(p[1:] / p[:-1])
    else:
        raise ValidationError(f"unknown return kind {kind!r}")
    return ReturnSeries(series.ticker, series.dates[1:], values, kind)


def low_close_signal(series: BarSeries) -> SignalSeries:
    """-1 where low > close, +1 where low < close, 0 where equal.

    The -1 branch cannot fire on bars that pass validation; it is kept for
    raw inputs built outside :class:`BarSeries`.
    """
    low, close = series.low, series.close
    values = np.where(low > close, -1, np.where(low < close, 1, 0))
    return SignalSeries(series.dates, values)


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov against the standard normal
# --------------------------------------------------------------------------
def _normal_cdf(x: np.ndarray) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr(x)


def ks_statistic(sample: np.ndarray) -> float:
    """sup_x |F_n(x) - Phi(x)|, attained at the sample points."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise InsufficientData("empty sample")
    cdf = _normal_cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def kolmogorov_pvalue(d: float, n: int, tol: float = 1e-10, max_terms: int = 100_000) -> float:
    """Asymptotic P(D_n > d) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 n d^2)."""
    lam2 = n * d * d
    if lam2 <= 0:
        return 1.0
    total = 0.0
    for k in range(1, max_terms + 1):
        term = math.exp(-2.0 * k * k * lam2)
        total += term if k % 2 else -term
        if term < tol:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_normal_test(sample: np.ndarray, standardize: bool = True) -> tuple[float, float]:
    """(statistic, p_value) of a one-sample KS test against N(0, 1)."""
    x = np.asarray(sample, dtype=float)
    if standardize:
        if x.size < 2:
            raise InsufficientData("need at least 2 observations to standardize")
        sd = x.std(ddof=1)
        if not sd > 0:
            raise ZeroVariance("sample has zero variance")
        x = (x - x.mean()) / sd
    d = ks_statistic(x)
    return d, kolmogorov_pvalue(d, x.size)


def signal_filter_mask(signal: np.ndarray, window: int) -> np.ndarray:
    """Dates kept by the rolling momentum-consistency filter.

    In each trailing window the sign of the signal sum picks a side; the
    dates inside that window whose signal matches the side are kept. Kept
    dates are pooled as a set, so overlapping windows never duplicate a date.
    """
    s = np.asarray(signal, dtype=np.int64)
    n = s.size
    keep = np.zeros(n, dtype=bool)
    if n < window:
        return keep
    sums = np.convolve(s, np.ones(window, dtype=np.int64), mode="valid")
    for end, total in enumerate(sums, start=window - 1):
        if total == 0:
            continue
        side = 1 if total > 0 else -1
        lo = end - window + 1
        keep[lo:end + 1] |= s[lo:end + 1] == side
    return keep


def ks_screen(returns: ReturnSeries, signal: SignalSeries, window: int) -> KsResult:
    if window < 1:
        raise ValidationError("window must be positive")
    common, ri, si = np.intersect1d(returns.dates, signal.dates, return_indices=True)
    if common.size != returns.dates.size:
        raise DateMisalignment("signal does not cover every return date")
    if common.size < window + 1:
        raise InsufficientData(f"need at least {window + 1} observations, have {common.size}")
    mask = signal_filter_mask(signal.values[si], window)
    kept = returns.values[ri][mask]
    if kept.size < 2:
        raise InsufficientData("signal filter retained fewer than 2 returns")
    d, p = ks_normal_test(kept, standardize=True)
    return KsResult(returns.ticker, window, d, p, int(kept.size))


def screen_series(series: BarSeries, windows: Sequence[int] = (5, 10, 20),
                  price_field: str = "adj_close") -> list[KsResult]:
    rets = compute_returns(series, "simple", price_field)
    sig = low_close_signal(series)
    sig = SignalSeries(sig.dates[1:], sig.values[1:])
    return [ks_screen(rets, sig, w) for w in windows]


# --------------------------------------------------------------------------
# Synthetic regimes
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Regime:
    drift: float  # per-day log drift
    vol: float  # per-day log-return standard deviation
    length: int


@dataclass(frozen=True)
class RegimeSpec:
    segments: tuple[Regime, ...]
    start_price: float = 100.0
    start_date: str = "2000-01-03"
    volume_mean: float = 13.0  # mean of log volume
    volume_sd: float = 0.3

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Regime) else Regime(**s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise InvalidRegime("at least one regime segment is required")
        for s in segs:
            if s.vol < 0 or s.length < 1 or not math.isfinite(s.drift):
                raise InvalidRegime(f"invalid regime {s}")
        if not self.start_price > 0:
            raise InvalidRegime("start_price must be positive")

    @property
    def n_days(self) -> int:
        return sum(s.length for s in self.segments)


def business_days(start: str, n: int) -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def _regime_arrays(spec: RegimeSpec):
    drift = np.concatenate([np.full(s.length, s.drift) for s in spec.segments])
    vol = np.concatenate([np.full(s.length, s.vol) for s in spec.segments])
    return drift, vol


def bars_from_log_returns(ticker: str, log_ret: np.ndarray, vol: np.ndarray,
                          spec: RegimeSpec, rng: np.random.Generator) -> BarSeries:
    """Close path from log returns (first bar at start_price); OHLC around it."""
    n = log_ret.size
    steps = log_ret.copy()
    steps[0] = 0.0
    close = spec.start_price * np.exp(np.cumsum(steps))
    open_ = np.empty(n)
    open_[0] = spec.start_price
    open_[1:] = close[:-1]
    # wicks: half-normal with scale half the daily vol, capped so low stays positive
    u = np.minimum(np.abs(rng.standard_normal(n)) * 0.5 * vol, 0.5)
    w = np.minimum(np.abs(rng.standard_normal(n)) * 0.5 * vol, 0.5)
    high = np.maximum(open_, close) * (1.0 + u)
    low = np.minimum(open_, close) * (1.0 - w)
    volume = np.round(np.exp(spec.volume_mean + spec.volume_sd * rng.standard_normal(n)))
    dates = business_days(spec.start_date, n)
    return BarSeries(ticker, dates, open_, high, low, close, close.copy(), volume)


def generate_synthetic(spec: RegimeSpec, seed: int, ticker: str = "SYN") -> BarSeries:
    """Regime-switching geometric Brownian path.

    Log return on day t (t >= 1) is ``drift_t + vol_t * z_t``, so with zero
    volatility ``close_t = start_price * exp(drift * t)`` exactly.
    """
    rng = np.random.default_rng(seed)
    drift, vol = _regime_arrays(spec)
    z = rng.standard_normal(spec.n_days)
    return bars_from_log_returns(ticker, drift + vol * z, vol, spec, rng)


@dataclass(frozen=True)
class UniverseSpec:
    """Multi-name universe: a market path from ``regime`` plus per-name
    idiosyncratic noise, ``r_i = beta_i * r_m + idio_i``.

    Betas are spread evenly over ``beta_range``; per-name drift offsets are
    spread evenly over ``[-idio_drift_spread, +idio_drift_spread]`` (per day).
    Idiosyncratic volatility is ``idio_vol_ratio`` times the market regime vol.
    """

    regime: RegimeSpec
    tickers: tuple[str, ...]
    beta_range: tuple[float, float] = (0.5, 1.5)
    idio_vol_ratio: float = 1.0
    idio_drift_spread: float = 0.0
    benchmark: str | None = "SPY"

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "beta_range", tuple(self.beta_range))
        if not self.tickers:
            raise InvalidRegime("universe needs at least one ticker")
        if len(set(self.tickers)) != len(self.tickers):
            raise InvalidRegime("duplicate tickers")
        if self.idio_vol_ratio < 0:
            raise InvalidRegime("idio_vol_ratio must be non-negative")


def generate_universe(spec: UniverseSpec, seed: int) -> dict[str, BarSeries]:
    """Deterministic multi-name universe; each name has its own child stream."""
    root = np.random.SeedSequence(seed)
    k = len(spec.tickers)
    children = root.spawn(k + 1)
    mrng = np.random.default_rng(children[0])
    drift, vol = _regime_arrays(spec.regime)
    n = spec.regime.n_days
    market = drift + vol * mrng.standard_normal(n)
    out: dict[str, BarSeries] = {}
    if spec.benchmark:
        out[spec.benchmark] = bars_from_log_returns(spec.benchmark, market, vol, spec.regime, mrng)
    lo, hi = spec.beta_range
    betas = np.linspace(lo, hi, k) if k > 1 else np.array([0.5 * (lo + hi)])
    spreads = (np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)) * spec.idio_drift_spread
    for i, ticker in enumerate(spec.tickers):
        rng = np.random.default_rng(children[i + 1])
        idio_vol = spec.idio_vol_ratio * vol
        lr = betas[i] * market + spreads[i] + idio_vol * rng.standard_normal(n)
        out[ticker] = bars_from_log_returns(ticker, lr, np.sqrt(betas[i] ** 2 + spec.idio_vol_ratio ** 2) * vol,
                                            spec.regime, rng)
    return out


def regime_spec_from_dict(doc: dict) -> RegimeSpec:
    return RegimeSpec(
        segments=tuple(Regime(float(s["drift"]), float(s["vol"]), int(s["length"]))
                       for s in doc["segments"]),
        start_price=float(doc.get("start_price", 100.0)),
        start_date=str(doc.get("start_date", "2000-01-03")),
        volume_mean=float(doc.get("volume_mean", 13.0)),
        volume_sd=float(doc.get("volume_sd", 0.3)),
    )


def universe_spec_from_dict(doc: dict) -> UniverseSpec:
    """A generator document with a ``universe`` block (see ``data/crash.json``)."""
    u = doc["universe"]
    return UniverseSpec(
        regime=regime_spec_from_dict(doc),
        tickers=tuple(u["tickers"]),
        beta_range=tuple(u.get("beta_range", (0.5, 1.5))),
        idio_vol_ratio=float(u.get("idio_vol_ratio", 1.0)),
        idio_drift_spread=float(u.get("idio_drift_spread", 0.0)),
        benchmark=u.get("benchmark", "SPY"),
    )


def load_builtin_spec(name: str) -> dict:
    """Packaged generator spec, e.g. ``crash``."""
    from importlib import resources

    text = resources.files("sizebench").joinpath("data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def align_universe(universe: dict[str, BarSeries]) -> tuple[np.ndarray, dict[str, BarSeries]]:
    """Restrict every series to the intersection of their calendars."""
    if not universe:
        raise EmptySeries("empty universe")
    common = None
    for s in universe.values():
        common = s.dates if common is None else np.intersect1d(common, s.dates)
    if common.size == 0:
        raise DateMisalignment("universe calendars do not overlap")
    aligned = {t: s.take(np.isin(s.dates, common)) for t, s in universe.items()}
    return common, aligned
