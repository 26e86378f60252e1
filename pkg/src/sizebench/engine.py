"""Daily long/short backtester with factor ranking, sizing and risk reporting.

Timeline for a signal day t: the factor row at t (built from data up to
and including t) ranks the names, targets are traded at the open of
t + 1 against equity marked at that open, and positions are marked at
every close. Shares are fractional so equity bookkeeping is exact.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from . import indicators, vartests
from .errors import InsufficientData, ValidationError
from .kalman import BURN_IN, dynamic_beta
from .market_data import BarSeries, ReturnSeries, align_universe
from .risk import VarConfig, hit_sequence, rolling_var, var_loss
from .sizing import SizingPolicy, target_positions

log = logging.getLogger(__name__)

INITIAL_CAPITAL = 10_000_000.0
TRADING_DAYS = 252
REBALANCE = ("daily", "weekly", "monthly")
QUANTILE_LEVELS = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
MIN_TRADE_VALUE = 1e-6  # currency units


class EmptyUniverse(ValidationError):
    pass


class CalendarMismatch(ValidationError):
    pass


class InsufficientHistory(InsufficientData):
    pass


class TooFewNames(InsufficientData):
    pass


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------
@dataclass
class PortfolioState:
    date: np.datetime64
    cash: float
    positions: dict[str, float]
    equity: float
    peak_equity: float

    def mark(self, prices: Mapping[str, float]) -> float:
        return self.cash + sum(sh * prices[t] for t, sh in self.positions.items())


@dataclass(frozen=True)
class FactorPanel:
    dates: np.ndarray
    tickers: tuple[str, ...]
    values: np.ndarray  # (n_dates, n_tickers); NaN = not available
    quantiles: int = 10
    horizons: tuple[int, ...] = (1, 5, 10)

    def __post_init__(self):
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.dates.size, len(self.tickers)):
            raise ValidationError(f"factor values have shape {vals.shape}, expected "
                                  f"{(self.dates.size, len(self.tickers))}")
        if self.quantiles < 1:
            raise ValidationError("quantile count must be >= 1")
        if not self.horizons or min(self.horizons) < 1:
            raise ValidationError("horizons must be positive")

    def reindex(self, dates: np.ndarray, tickers: Sequence[str]) -> "FactorPanel":
        """Rows for ``dates`` and columns for ``tickers``; missing cells become NaN."""
        dates = np.asarray(dates, dtype="datetime64[D]")
        out = np.full((dates.size, len(tickers)), np.nan)
        rpos = np.searchsorted(self.dates, dates)
        rpos_c = np.minimum(rpos, self.dates.size - 1)
        rows_ok = self.dates[rpos_c] == dates
        col = {t: i for i, t in enumerate(self.tickers)}
        for j, t in enumerate(tickers):
            if t in col:
                out[rows_ok, j] = self.values[rpos_c[rows_ok], col[t]]
        return FactorPanel(dates, tuple(tickers), out, self.quantiles, self.horizons)


@dataclass(frozen=True)
class RunConfig:
    capital: float = INITIAL_CAPITAL
    commission_bps: float = 0.0
    rebalance: str = "weekly"
    var_alpha: float = 0.05
    var_window: int = 250
    var_method: str = "parametric"
    vol_window: int = 126
    beta_method: str = "ols"
    benchmark: str | None = "SPY"
    risk_free: float = 0.0

    def __post_init__(self):
        if not self.capital > 0:
            raise ValidationError("initial capital must be positive")
        if self.commission_bps < 0:
            raise ValidationError("commission_bps must be non-negative")
        if self.rebalance not in REBALANCE:
            raise ValidationError(f"rebalance must be one of {REBALANCE}")
        if self.beta_method not in ("ols", "kalman"):
            raise ValidationError("beta_method must be ols or kalman")
        if self.vol_window < 2:
            raise ValidationError("vol_window must be >= 2")


@dataclass
class BacktestReport:
    dates: np.ndarray
    equity_curve: np.ndarray
    daily_returns: np.ndarray
    long_exposure: np.ndarray  # fraction of equity, at the close
    short_exposure: np.ndarray
    rolling_volatility: np.ndarray
    var_dates: np.ndarray
    var_loss: np.ndarray
    var_hits: np.ndarray
    metrics: dict
    max_var: float | None
    max_var_by_size: dict
    test_results: dict
    return_quantiles: dict
    ic_series: dict
    trades: int = 0
    commissions: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def gross_exposure(self) -> np.ndarray:
        return self.long_exposure + self.short_exposure

    @property
    def net_exposure(self) -> np.ndarray:
        return self.long_exposure - self.short_exposure

    def to_dict(self) -> dict:
        return _clean({
            "n_days": int(self.dates.size),
            "start": str(self.dates[0]), "end": str(self.dates[-1]),
            "initial_equity": float(self.equity_curve[0]),
            "final_equity": float(self.equity_curve[-1]),
            "metrics": self.metrics,
            "max_var": self.max_var,
            "max_var_by_size": self.max_var_by_size,
            "test_results": self.test_results,
            "return_quantiles": self.return_quantiles,
            "factor_ic": self.ic_series.get("summary") if self.ic_series else None,
            "trades": self.trades,
            "commissions": self.commissions,
            "flags": sorted(set(self.flags)),
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        d = self.dates.astype(str)
        _write_rows(out / "equity_curve.csv", ["date", "equity", "daily_return"],
                    zip(d, self.equity_curve, np.r_[np.nan, self.daily_returns]))
        _write_rows(out / "exposures.csv", ["date", "long", "short", "gross", "net"],
                    zip(d, self.long_exposure, self.short_exposure, self.gross_exposure,
                        self.net_exposure))
        _write_rows(out / "rolling_volatility.csv", ["date", "volatility"],
                    zip(d[1:], self.rolling_volatility))
        _write_rows(out / "rolling_var.csv", ["date", "var_loss", "hit"],
                    zip(self.var_dates.astype(str), self.var_loss, self.var_hits))
        rows = []
        for period, block in self.return_quantiles.items():
            rows.append([period, block["count"], block["mean"]] + block["quantiles"])
        _write_rows(out / "return_quantiles.csv",
                    ["period", "count", "mean"] + [f"q{lv:g}" for lv in QUANTILE_LEVELS], rows)
        if self.ic_series:
            hs = sorted(self.ic_series["ic"], key=int)
            _write_rows(out / "ic_series.csv", ["date"] + [f"ic_{h}" for h in hs],
                        zip(self.ic_series["dates"], *(self.ic_series["ic"][h] for h in hs)))
        _write_rows(out / "max_var_by_size.csv", ["gross_pct", "max_var"],
                    sorted(self.max_var_by_size.items(), key=lambda kv: float(kv[0])))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "" if not math.isfinite(x) else repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _write_rows(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


# --------------------------------------------------------------------------
# Performance metrics
# --------------------------------------------------------------------------
def max_drawdown(equity: np.ndarray) -> float:
    equity = np.asarray(equity, dtype=float)
    peak = np.maximum.accumulate(equity)
    return float(np.max(1.0 - equity / peak)) if equity.size else 0.0


def performance_metrics(daily_returns: ReturnSeries, benchmark: ReturnSeries | None = None,
                        rf: float = 0.0, beta_method: str = "ols") -> dict:
    """Annualised metrics of a daily simple-return series.

    ``rf`` is an annual rate spread evenly over 252 days. Sortino uses the
    sample standard deviation of the negative excess returns (threshold 0).
    Specific return is ``total - beta * benchmark_total`` with beta from OLS
    or the mean post-burn-in Kalman beta.
    """
    r = daily_returns.values
    if r.size < 2:
        raise InsufficientData("need at least 2 returns for metrics")
    flags = []
    excess = r - rf / TRADING_DAYS
    sd = float(np.std(r, ddof=1))
    sd_x = float(np.std(excess, ddof=1))
    total = float(np.prod(1.0 + r) - 1.0)
    root = math.sqrt(TRADING_DAYS)
    if sd_x > 0:
        sharpe = float(excess.mean() / sd_x * root)
    else:
        sharpe = None
        flags.append("zero_volatility")
    neg = r[r < 0]  # downside measured against a zero threshold
    down = float(np.std(neg, ddof=1)) if neg.size >= 2 else 0.0
    if down > 0:
        sortino = float(excess.mean() / down * root)
    else:
        sortino = None
        flags.append("no_downside")
    equity = np.cumprod(np.r_[1.0, 1.0 + r])
    out = {
        "total_return": total,
        "volatility": sd * root,
        "sharpe": sharpe,
        "sortino": sortino,
        "max_drawdown": max_drawdown(equity),
        "beta": None,
        "common_return": None,
        "specific_return": None,
    }
    if benchmark is not None:
        common_dates, ia, ib = np.intersect1d(daily_returns.dates, benchmark.dates,
                                              return_indices=True)
        if common_dates.size < 2:
            raise InsufficientData("portfolio and benchmark share fewer than 2 dates")
        y, x = r[ia], benchmark.values[ib]
        if beta_method == "kalman":
            path = dynamic_beta(ReturnSeries("portfolio", common_dates, y),
                                ReturnSeries("benchmark", common_dates, x))
            beta = float(np.mean(path.beta[BURN_IN:]))
        else:
            xc = x - x.mean()
            sxx = float(xc @ xc)
            beta = float(xc @ (y - y.mean()) / sxx) if sxx > 0 else 0.0
        bench_total = float(np.prod(1.0 + x) - 1.0)
        out["beta"] = beta
        out["common_return"] = beta * bench_total + 0.0
        out["specific_return"] = float(np.prod(1.0 + y) - 1.0) - beta * bench_total
    out["flags"] = flags
    return out


# --------------------------------------------------------------------------
# Factor analytics
# --------------------------------------------------------------------------
def forward_returns(closes: np.ndarray, horizon: int) -> np.ndarray:
    """close[t + h] / close[t] - 1 per column; trailing rows are NaN."""
    closes = np.asarray(closes, dtype=float)
    out = np.full(closes.shape, np.nan)
    if horizon < closes.shape[0]:
        out[:-horizon] = closes[horizon:] / closes[:-horizon] - 1.0
    return out


def quantile_labels(values: np.ndarray, q: int) -> np.ndarray:
    """Labels 1..q by ascending rank; counts per label differ by at most one."""
    m = values.size
    order = np.argsort(values, kind="stable")
    ranks = np.empty(m, dtype=np.int64)
    ranks[order] = np.arange(m)
    return ranks * q // m + 1


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Rank correlation with average ranks for ties; NaN when a side is constant."""
    ra, rb = stats.rankdata(a), stats.rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    return float(ra @ rb) / den if den > 0 else float("nan")


@dataclass(frozen=True)
class FactorAnalytics:
    dates: np.ndarray
    ic: dict[int, np.ndarray]
    quantile_mean: dict[int, np.ndarray]
    quantile_std: dict[int, np.ndarray]
    qq: dict[int, tuple[np.ndarray, np.ndarray]]
    flags: tuple[str, ...] = ()

    def summary(self) -> dict:
        out = {}
        for h, ic in self.ic.items():
            ok = ic[np.isfinite(ic)]
            out[str(h)] = {
                "ic_mean": float(ok.mean()) if ok.size else None,
                "ic_std": float(ok.std(ddof=1)) if ok.size > 1 else None,
                "n_dates": int(ok.size),
                "quantile_mean": self.quantile_mean[h].tolist(),
                "quantile_std": self.quantile_std[h].tolist(),
            }
        return _clean(out)


def factor_analysis(factor: FactorPanel, forward: Mapping[int, np.ndarray]) -> FactorAnalytics:
    """Per-date IC and quantile buckets for each horizon in ``forward``.

    ``forward[h]`` is a (dates x tickers) panel aligned with ``factor``.
    Dates with fewer than ``factor.quantiles`` usable names are skipped.
    """
    q = factor.quantiles
    ic, qmean, qstd, qq = {}, {}, {}, {}
    flags = set()
    usable_any = False
    for h, fwd in forward.items():
        fwd = np.asarray(fwd, dtype=float)
        if fwd.shape != factor.values.shape:
            raise ValidationError(f"forward panel for horizon {h} does not match the factor panel")
        series = np.full(factor.dates.size, np.nan)
        buckets: list[list[np.ndarray]] = [[] for _ in range(q)]
        for t in range(factor.dates.size):
            f, r = factor.values[t], fwd[t]
            ok = np.isfinite(f) & np.isfinite(r)
            if ok.sum() < max(q, 2):
                continue
            usable_any = True
            fo, ro = f[ok], r[ok]
            series[t] = spearman(fo, ro)
            if not math.isfinite(series[t]):
                flags.add("degenerate_ranks")
            labels = quantile_labels(fo, q)
            for j in range(q):
                buckets[j].append(ro[labels == j + 1])
        pooled = [np.concatenate(b) if b else np.zeros(0) for b in buckets]
        qmean[h] = np.array([p.mean() if p.size else np.nan for p in pooled])
        qstd[h] = np.array([p.std(ddof=1) if p.size > 1 else np.nan for p in pooled])
        ic[h] = series
        good = np.sort(series[np.isfinite(series)])
        m = good.size
        theo = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m) if m else np.zeros(0)
        qq[h] = (theo, good)
    if not usable_any:
        raise TooFewNames(f"no date has at least {max(q, 2)} names with factor and forward values")
    return FactorAnalytics(factor.dates, ic, qmean, qstd, qq, tuple(sorted(flags)))


def _zscore_rows(x: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mu = np.nanmean(x, axis=1, keepdims=True)
        sd = np.nanstd(x, axis=1, keepdims=True)
    return np.where(sd > 0, (x - mu) / np.where(sd > 0, sd, 1.0), 0.0 * x)


def default_factor(universe: Mapping[str, BarSeries], rsi_window: int = 14,
                   bb_window: int = 20, quantiles: int = 10,
                   horizons: tuple[int, ...] = (1, 5, 10)) -> FactorPanel:
    """Mean-reversion composite: z((50 - RSI)/50) and z(0.5 - %B), averaged and
    z-scored again per date. Uses closes up to and including each date."""
    dates, aligned = align_universe(dict(universe))
    tickers = tuple(sorted(aligned))
    rsi_part = np.full((dates.size, len(tickers)), np.nan)
    bb_part = np.full_like(rsi_part, np.nan)
    for j, t in enumerate(tickers):
        s = aligned[t]
        if len(s) > max(rsi_window, bb_window):
            rsi_part[:, j] = (50.0 - indicators.rsi(s, rsi_window)["value"]) / 50.0
            bb = indicators.bollinger(s, bb_window)
            width = bb["upper"] - bb["lower"]
            with np.errstate(invalid="ignore", divide="ignore"):
                pct_b = np.where(width > 0, (s.close - bb["lower"]) / np.where(width > 0, width, 1.0), 0.5)
            pct_b[np.isnan(width)] = np.nan
            bb_part[:, j] = 0.5 - pct_b
    composite = _zscore_rows(0.5 * (_zscore_rows(rsi_part) + _zscore_rows(bb_part)))
    return FactorPanel(dates, tickers, composite, quantiles, horizons)


# --------------------------------------------------------------------------
# Backtest
# --------------------------------------------------------------------------
def signal_days(dates: np.ndarray, rebalance: str) -> np.ndarray:
    """Boolean mask of signal days: the last trading day of each period."""
    days = dates.astype("datetime64[D]").astype(np.int64)
    if rebalance == "daily":
        key = days
    elif rebalance == "weekly":
        key = (days + 3) // 7  # Monday-start weeks (1970-01-01 was a Thursday)
    else:
        key = dates.astype("datetime64[M]").astype(np.int64)
    mask = np.ones(dates.size, dtype=bool)
    mask[:-1] = key[1:] != key[:-1]
    return mask


def _select(values: np.ndarray, tickers: Sequence[str], q: int) -> tuple[list, list]:
    ok = np.flatnonzero(np.isfinite(values))
    m = ok.size
    if m == 0:
        return [], []
    k = max(1, m // q)
    order = ok[np.argsort(-values[ok], kind="stable")]
    longs = [tickers[i] for i in order[:k]]
    rest = [i for i in order[::-1] if tickers[i] not in longs]
    shorts = [tickers[i] for i in rest[:k]]
    return longs, shorts


def _book_cov(returns: np.ndarray, col: dict, names: list, t: int, lookback: int):
    if len(names) < 2:
        return None
    lo = max(0, t - lookback + 1)
    block = returns[lo:t + 1][:, [col[n] for n in names]]
    block = block[np.all(np.isfinite(block), axis=1)]
    if block.shape[0] <= len(names):
        return None
    return np.cov(block, rowvar=False)


def _period_returns(r: np.ndarray, key: np.ndarray) -> np.ndarray:
    edges = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    return np.multiply.reduceat(1.0 + r, edges) - 1.0 if r.size else r


def _quantile_block(x: np.ndarray) -> dict:
    if x.size == 0:
        return {"count": 0, "mean": None, "quantiles": [None] * len(QUANTILE_LEVELS)}
    return {"count": int(x.size), "mean": float(x.mean()),
            "quantiles": np.quantile(x, QUANTILE_LEVELS).tolist()}


def run_backtest(universe: Mapping[str, BarSeries], factor: FactorPanel,
                 policy: SizingPolicy, config: RunConfig | None = None) -> BacktestReport:
    config = config or RunConfig()
    if not universe:
        raise EmptyUniverse("universe is empty")
    bench_series = universe.get(config.benchmark) if config.benchmark else None
    tradable = {t: s for t, s in universe.items() if t != config.benchmark}
    if not tradable:
        raise EmptyUniverse("universe has no tradable names besides the benchmark")
    full = dict(tradable)
    if bench_series is not None:
        full[config.benchmark] = bench_series
    try:
        dates, aligned = align_universe(full)
    except ValidationError as exc:
        raise CalendarMismatch(str(exc)) from None
    n = dates.size
    if n < 3:
        raise InsufficientHistory(f"need at least 3 common dates, have {n}")
    tickers = tuple(sorted(tradable))
    col = {t: j for j, t in enumerate(tickers)}
    opens = np.column_stack([aligned[t].open for t in tickers])
    closes = np.column_stack([aligned[t].close for t in tickers])
    panel = factor.reindex(dates, tickers)
    if not np.any(np.isfinite(panel.values)):
        raise CalendarMismatch("factor panel has no values on the universe calendar")
    cc_returns = np.full(closes.shape, np.nan)
    cc_returns[1:] = closes[1:] / closes[:-1] - 1.0
    lookback = int(policy.params.get("cov_lookback", 60))
    signals = signal_days(dates, config.rebalance)
    fee = config.commission_bps * 1e-4

    shares = np.zeros(len(tickers))
    cash = float(config.capital)
    equity = np.empty(n)
    long_exp = np.empty(n)
    short_exp = np.empty(n)
    pending = None
    trades = 0
    commissions = 0.0
    state = PortfolioState(dates[0], cash, {}, cash, cash)
    for t in range(n):
        if pending is not None:
            eq_open = cash + float(shares @ opens[t])
            target = np.zeros(len(tickers))
            if eq_open > 0:
                target = pending * eq_open / opens[t]
            delta = target - shares
            delta[np.abs(delta) * opens[t] < MIN_TRADE_VALUE] = 0.0  # rounding noise
            target = shares + delta
            traded = np.abs(delta) * opens[t]
            cost = fee * float(traded.sum())
            cash -= float(delta @ opens[t]) + cost
            commissions += cost
            trades += int(np.count_nonzero(delta))
            shares = target
            pending = None
        value = shares * closes[t]
        equity[t] = cash + float(value.sum())
        long_exp[t] = value[value > 0].sum() / equity[t] if equity[t] > 0 else 0.0
        short_exp[t] = -value[value < 0].sum() / equity[t] if equity[t] > 0 else 0.0
        if signals[t] and t < n - 1:
            longs, shorts = _select(panel.values[t], tickers, panel.quantiles)
            if longs or shorts:
                cov_l = cov_s = None
                if policy.kind == "min_variance":
                    cov_l = _book_cov(cc_returns, col, longs, t, lookback)
                    cov_s = _book_cov(cc_returns, col, shorts, t, lookback)
                wv = target_positions(policy, longs, shorts, max(equity[t], 1e-300), cov_l, cov_s)
                pending = np.zeros(len(tickers))
                for name, w in zip(wv.tickers, wv.weights):
                    pending[col[name]] = w
        state = PortfolioState(dates[t], cash, dict(zip(tickers, shares.tolist())), equity[t],
                               max(state.peak_equity, equity[t]))

    daily = equity[1:] / equity[:-1] - 1.0
    rets = ReturnSeries("portfolio", dates[1:], daily)
    flags: list[str] = []
    bench_rets = None
    if bench_series is not None:
        bc = aligned[config.benchmark].close
        bench_rets = ReturnSeries(config.benchmark, dates[1:], bc[1:] / bc[:-1] - 1.0)
    metrics = performance_metrics(rets, bench_rets, config.risk_free, config.beta_method)
    flags.extend(metrics.pop("flags"))

    w = config.vol_window
    vol = np.full(daily.size, np.nan)
    if daily.size >= w:
        vol[w - 1:] = sliding_window_view(daily, w).std(axis=1, ddof=1) * math.sqrt(TRADING_DAYS)

    var_cfg = VarConfig(alpha=config.var_alpha, side="long", method=config.var_method,
                        window=config.var_window)
    var_dates = np.zeros(0, dtype="datetime64[D]")
    var_l = np.zeros(0)
    hits_arr = np.zeros(0, dtype=np.int64)
    max_var, by_size, tests = None, {}, {}
    if daily.size > config.var_window:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            vs = rolling_var(rets, var_cfg)
        if caught:
            flags.append("degenerate_var_window")
        hs = hit_sequence(rets, vs)
        var_dates, var_l, hits_arr = vs.dates, var_loss(vs), hs.hits
        max_var = float(var_l.max())
        gross_at = (long_exp + short_exp)[np.searchsorted(dates, vs.dates)]
        pct = np.round(gross_at * 100.0).astype(np.int64)
        for p in np.unique(pct):
            by_size[str(int(p))] = float(var_l[pct == p].max())
        if vs.degenerate is not None and vs.degenerate.all():
            tests = {"skipped": "portfolio returns have zero variance"}
        else:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                tests = vartests.run_all(hs, vs)
            if caught:
                flags.append("vartest_warning")
    else:
        flags.append("var_insufficient_history")

    wk = (dates[1:].astype(np.int64) + 3) // 7
    mo = dates[1:].astype("datetime64[M]").astype(np.int64)
    quants = {"day": _quantile_block(daily),
              "week": _quantile_block(_period_returns(daily, wk)),
              "month": _quantile_block(_period_returns(daily, mo))}

    ic = {}
    try:
        fwd = {h: forward_returns(closes, h) for h in panel.horizons}
        fa = factor_analysis(panel, fwd)
        ic = {"dates": dates.astype(str).tolist(), "ic": {str(h): v for h, v in fa.ic.items()},
              "summary": fa.summary()}
    except TooFewNames:
        flags.append("ic_unavailable")
    log.info("backtest done: %d days, final equity %.2f", n, equity[-1])
    return BacktestReport(dates, equity, daily, long_exp, short_exp, vol, var_dates, var_l,
                          hits_arr, metrics, max_var, by_size, tests, quants, ic, trades,
                          commissions, flags)


def run_scenarios(universe: Mapping[str, BarSeries], factor: FactorPanel,
                  policies: Mapping[str, SizingPolicy],
                  config: RunConfig | None = None) -> dict[str, BacktestReport]:
    return {name: run_backtest(universe, factor, p, config) for name, p in policies.items()}


SCENARIOS = {
    "hedge10_10": SizingPolicy("fixed_fraction", 0.10, 0.10),
    "short20_long10": SizingPolicy("fixed_fraction", 0.10, 0.20),
    "short10_long20": SizingPolicy("fixed_fraction", 0.20, 0.10),
}
