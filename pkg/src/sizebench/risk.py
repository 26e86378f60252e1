"""Value-at-Risk thresholds and violation (hit) sequences.

VaR values are return-space thresholds. A long position is breached when
the return falls to or below its (typically negative) threshold; a short
position when the return rises to or above its threshold.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .errors import DateMisalignment, DomainError, InsufficientData, ValidationError
from .market_data import ReturnSeries

DEFAULT_ALPHA = 0.05
DEFAULT_WINDOW = 250


@dataclass(frozen=True)
class DistributionParams:
    mu: float
    sigma: float
    family: str = "normal"
    df: float | None = None

    def __post_init__(self):
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.family not in ("normal", "student_t"):
            raise ValidationError(f"unknown family {self.family!r}")
        if self.family == "student_t" and not (self.df is not None and self.df > 2):
            raise DomainError("student_t needs df > 2")


@dataclass(frozen=True)
class VarConfig:
    alpha: float = DEFAULT_ALPHA
    side: str = "long"
    method: str = "parametric"
    window: int = DEFAULT_WINDOW
    family: str = "normal"
    df: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.side not in ("long", "short"):
            raise ValidationError(f"side must be long or short, got {self.side!r}")
        if self.method not in ("parametric", "historical"):
            raise ValidationError(f"method must be parametric or historical, got {self.method!r}")

    def validate_for_backtest(self) -> None:
        """Stricter checks applied before rolling estimation."""
        if not self.alpha < 0.5:
            raise DomainError("rolling VaR needs alpha < 0.5")
        if self.window < 30:
            raise ValidationError("rolling VaR window must be at least 30 days")


@dataclass(frozen=True)
class VarSeries:
    dates: np.ndarray
    var_values: np.ndarray
    config: VarConfig
    degenerate: np.ndarray | None = None  # windows with zero sample variance

    def __post_init__(self):
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        vals = np.asarray(self.var_values, dtype=float)
        object.__setattr__(self, "var_values", vals)
        if vals.shape != self.dates.shape:
            raise ValidationError("dates and var_values differ in length")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("VaR values must be finite")

    @property
    def warning(self) -> bool:
        return bool(self.degenerate is not None and self.degenerate.any())

    def __len__(self) -> int:
        return self.var_values.size


@dataclass(frozen=True)
class HitSequence:
    dates: np.ndarray
    hits: np.ndarray
    alpha: float

    def __post_init__(self):
        h = np.asarray(self.hits)
        if h.size and not np.all((h == 0) | (h == 1)):
            raise ValidationError("hits must be binary")
        object.__setattr__(self, "hits", h.astype(np.int64))
        if self.dates is None:
            object.__setattr__(self, "dates", np.arange(h.size).astype("datetime64[D]"))
        else:
            object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        if self.dates.shape != self.hits.shape:
            raise ValidationError("dates and hits differ in length")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")

    @classmethod
    def from_array(cls, hits, alpha: float = DEFAULT_ALPHA) -> "HitSequence":
        return cls(None, np.asarray(hits), alpha)

    def __len__(self) -> int:
        return self.hits.size

    @property
    def count(self) -> int:
        return int(self.hits.sum())


def standardized_quantile(prob: float, family: str = "normal", df: float | None = None) -> float:
    """Quantile of the zero-mean, unit-variance member of ``family``."""
    if family == "normal":
        return float(stats.norm.ppf(prob))
    if family == "student_t":
        return float(stats.t.ppf(prob, df) * math.sqrt((df - 2.0) / df))
    raise ValidationError(f"unknown family {family!r}")


def parametric_var(params: DistributionParams, config: VarConfig) -> float:
    """mu + k*sigma with k the alpha (long) or 1-alpha (short) standardized quantile."""
    prob = config.alpha if config.side == "long" else 1.0 - config.alpha
    return params.mu + standardized_quantile(prob, params.family, params.df) * params.sigma


def constant_var(dates, params: DistributionParams, config: VarConfig) -> VarSeries:
    """A flat VaR forecast, e.g. from known true parameters."""
    dates = np.asarray(dates, dtype="datetime64[D]")
    return VarSeries(dates, np.full(dates.size, parametric_var(params, config)), config)


def rolling_var(returns: ReturnSeries, config: VarConfig) -> VarSeries:
    """Out-of-sample rolling VaR.

    The forecast for index t uses returns[t - window : t] only, so the
    first forecast is for index ``window``.
    """
    config.validate_for_backtest()
    r = returns.values
    w = config.window
    if r.size <= w:
        raise InsufficientData(f"need more than {w} returns, have {r.size}")
    windows = sliding_window_view(r[:-1], w)  # windows[j] = r[j : j + w], forecasts r[j + w]
    prob = config.alpha if config.side == "long" else 1.0 - config.alpha
    if config.method == "parametric":
        mu = windows.mean(axis=1)
        sd = windows.std(axis=1, ddof=1)
        degenerate = ~(sd > 1e-15 * np.maximum(np.abs(mu), 1e-300))
        sd = np.where(degenerate, 0.0, sd)
        k = standardized_quantile(prob, config.family, config.df)
        values = mu + k * sd
    else:
        values = np.quantile(windows, prob, axis=1)  # linear interpolation, type 7
        degenerate = windows.max(axis=1) == windows.min(axis=1)
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} VaR window(s) had zero variance", RuntimeWarning,
                      stacklevel=2)
    return VarSeries(returns.dates[w:], values, config, degenerate)


def hit_sequence(returns: ReturnSeries, var: VarSeries, side: str | None = None) -> HitSequence:
    """Binary breach indicator on the VaR dates (ties count as breaches)."""
    side = side or var.config.side
    pos = np.searchsorted(returns.dates, var.dates)
    if np.any(pos >= returns.dates.size) or not np.array_equal(
        returns.dates[np.minimum(pos, returns.dates.size - 1)], var.dates
    ):
        raise DateMisalignment("VaR dates are not a subset of the return dates")
    y = returns.values[pos]
    if side == "long":
        hits = y <= var.var_values
    elif side == "short":
        hits = y >= var.var_values
    else:
        raise ValidationError(f"side must be long or short, got {side!r}")
    return HitSequence(var.dates, hits.astype(np.int64), var.config.alpha)


def var_loss(var: VarSeries) -> np.ndarray:
    """Loss-magnitude view of the thresholds (positive = loss)."""
    return -var.var_values if var.config.side == "long" else var.var_values
