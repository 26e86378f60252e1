"""Position sizing: Kelly fractions for Bernoulli bets, fixed long/short
capital caps and minimum-variance weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ComputationError, DomainError, ValidationError

DEFAULT_GROSS_CAP = 1.5


class SingularCovariance(ComputationError):
    pass


class NonSymmetric(ValidationError):
    pass


@dataclass(frozen=True)
class KellyParams:
    p: float
    g: float
    capital0: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must be a probability, got {self.p}")
        if not -1.0 < self.g < 1.0:
            raise DomainError(f"|g| must be < 1, got {self.g}")

    @property
    def q(self) -> float:
        return 1.0 - self.p


def _xlogx(x: float) -> float:
    return 0.0 if x == 0.0 else x * math.log(x)


def kelly_growth(p: float, g: float) -> float:
    """Expected log growth per trial, p*ln(1+g) + (1-p)*ln(1-g)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if not -1.0 < g < 1.0:
        raise DomainError(f"|g| must be < 1, got {g}")
    return p * math.log1p(g) + (1.0 - p) * math.log1p(-g)


def kelly_optimal(p: float) -> tuple[float, float]:
    """Growth-optimal fraction and its growth rate for win probability p.

    Returns ``(p - q, p ln p + q ln q + ln 2)`` with 0 ln 0 taken as 0.
    """
    if not 0.5 < p <= 1.0:
        raise DomainError(f"Kelly optimum needs 0.5 < p <= 1, got {p}")
    q = 1.0 - p
    return p - q, _xlogx(p) + _xlogx(q) + math.log(2.0)


def kelly_capital_path(params: KellyParams, wins: int, trials: int) -> float:
    """Capital after ``trials`` bets with ``wins`` of them won."""
    if not 0 <= wins <= trials:
        raise DomainError(f"need 0 <= wins <= trials, got {wins}/{trials}")
    g = params.g
    return params.capital0 * (1.0 + g) ** wins * (1.0 - g) ** (trials - wins)


@dataclass(frozen=True)
class WeightVector:
    tickers: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "weights", w)
        if w.shape != (len(self.tickers),):
            raise ValidationError("one weight per ticker required")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")

    @property
    def gross(self) -> float:
        return float(np.abs(self.weights).sum())

    @property
    def net(self) -> float:
        return float(self.weights.sum())

    @property
    def long_exposure(self) -> float:
        return float(self.weights[self.weights > 0].sum())

    @property
    def short_exposure(self) -> float:
        return float(-self.weights[self.weights < 0].sum())

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.tickers, self.weights.tolist()))


@dataclass(frozen=True)
class SizingPolicy:
    """Capital fractions for the long and short books.

    ``kind`` is one of ``fixed_fraction``, ``kelly`` (both books scaled by
    the Kelly fraction for ``params['kelly_p']``) or ``min_variance``
    (minimum-variance weights inside each book over ``params['cov_lookback']``
    days).
    """

    kind: str = "fixed_fraction"
    long_pct: float = 0.1
    short_pct: float = 0.1
    params: dict = field(default_factory=dict)
    gross_cap: float = DEFAULT_GROSS_CAP

    def __post_init__(self):
        if self.kind not in ("fixed_fraction", "kelly", "min_variance"):
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        for name in ("long_pct", "short_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.long_pct + self.short_pct > self.gross_cap + 1e-12:
            raise ValidationError("long_pct + short_pct exceeds the gross exposure cap")
        if self.kind == "kelly":
            kelly_optimal(float(self.params.get("kelly_p", float("nan"))))

    @property
    def scale(self) -> float:
        """Multiplier on both books (the Kelly fraction for ``kelly``)."""
        if self.kind == "kelly":
            return kelly_optimal(float(self.params["kelly_p"]))[0]
        return 1.0


def min_variance_weights(cov, tickers: Sequence[str] | None = None,
                         ridge_scale: float = 1e-8, max_cond: float = 1e12) -> WeightVector:
    """Fully-invested minimum-variance weights, w = S^-1 1 / (1' S^-1 1).

    An ill-conditioned matrix gets ``ridge_scale * trace / k`` added to its
    diagonal before solving.
    """
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    k = S.shape[0]
    if S.shape != (k, k) or k < 1:
        raise ValidationError("covariance must be a non-empty square matrix")
    if not np.all(np.isfinite(S)):
        raise ValidationError("covariance has non-finite entries")
    scale = max(np.abs(S).max(), 1e-300)
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-10 * scale):
        raise NonSymmetric("covariance matrix is not symmetric")
    S = 0.5 * (S + S.T)
    tickers = tuple(tickers) if tickers is not None else tuple(f"asset{i}" for i in range(k))
    ones = np.ones(k)

    def _solve(M):
        L = np.linalg.cholesky(M)
        y = np.linalg.solve(L, ones)
        return np.linalg.solve(L.T, y)

    try:
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(S)
        if not cond <= max_cond:
            raise np.linalg.LinAlgError("ill-conditioned")
        x = _solve(S)
    except np.linalg.LinAlgError:
        ridge = ridge_scale * max(np.trace(S) / k, 1e-300)
        try:
            x = _solve(S + ridge * np.eye(k))
        except np.linalg.LinAlgError:
            raise SingularCovariance("covariance not positive definite after ridge") from None
    with np.errstate(over="ignore", invalid="ignore"):
        total = x.sum()
    if not np.isfinite(total) or total == 0:
        raise SingularCovariance("degenerate minimum-variance solution")
    return WeightVector(tickers, x / total)


def target_positions(policy: SizingPolicy, ranked_longs: Sequence[str],
                     ranked_shorts: Sequence[str], equity: float,
                     cov_long=None, cov_short=None) -> WeightVector:
    """Target weights (fractions of equity) for the two books.

    Fixed-fraction and Kelly policies split each book equally. Min-variance
    policies need the book covariance matrices; when one is missing that
    book falls back to equal weights.
    """
    longs, shorts = list(ranked_longs), list(ranked_shorts)
    if set(longs) & set(shorts):
        raise ValidationError("long and short lists must be disjoint")
    if not equity > 0:
        raise ValidationError("equity must be positive")
    scale = policy.scale
    lw = _book_weights(policy, longs, cov_long) * policy.long_pct * scale
    sw = _book_weights(policy, shorts, cov_short) * policy.short_pct * scale
    weights = np.concatenate([lw, -sw])
    gross = np.abs(weights).sum()
    if gross > policy.gross_cap:
        weights *= policy.gross_cap / gross
    return WeightVector(tuple(longs + shorts), weights)


def _book_weights(policy: SizingPolicy, names: list, cov) -> np.ndarray:
    k = len(names)
    if k == 0:
        return np.zeros(0)
    if policy.kind == "min_variance" and cov is not None:
        return min_variance_weights(cov, names).weights
    return np.full(k, 1.0 / k)
