"""Statistical backtests on VaR hit sequences.

* :func:`uc_test` - unconditional coverage likelihood ratio.
* :func:`independence_portmanteau` - Ljung-Box on hit autocorrelations,
  plus the known-alpha autocovariance (joint) statistic.
* :func:`markov_test` - generalised order-m Markov test (independence and
  conditional coverage).
* :func:`geometric_var_test` - duration hazard ``a * d**(b-1) * exp(c*|VaR|)``
  with the LR split into coverage, duration-independence and
  VaR-independence parts.

All p-values use chi-square asymptotics.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, logit, xlogy
from scipy.stats import chi2

from . import _kernels
from .errors import ComputationError, InsufficientData, ValidationError
from .risk import HitSequence, VarSeries

SMALL_SAMPLE_HITS = 20
LR_FLOOR = -1e-9


class EmptySequence(InsufficientData):
    pass


class TooFewViolations(InsufficientData):
    pass


class OptimizerNonConvergence(ComputationError):
    pass


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    df: int
    p_value: float
    components: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    __test__ = False  # not a pytest class

    @property
    def reject_5pct(self) -> bool:
        return self.p_value < 0.05

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "reject_5pct": self.reject_5pct,
            "components": dict(self.components),
            "flags": list(self.flags),
        }


def _result(name, stat, df, components=None, flags=()) -> TestResult:
    stat = float(stat)
    if stat < 0.0:
        if stat < LR_FLOOR:
            raise ComputationError(f"{name}: negative likelihood ratio {stat}")
        stat = 0.0
    p = float(chi2.sf(stat, df)) if df > 0 else 1.0
    return TestResult(name, stat, int(df), p, components or {}, tuple(flags))


def _bernoulli_ll(n0: float, n1: float, p: float) -> float:
    return float(xlogy(n0, 1.0 - p) + xlogy(n1, p))


# --------------------------------------------------------------------------
# Unconditional coverage
# --------------------------------------------------------------------------
def uc_test(hits: HitSequence) -> TestResult:
    n = len(hits)
    if n == 0:
        raise EmptySequence("empty hit sequence")
    n1 = hits.count
    n0 = n - n1
    pi_hat = n1 / n
    lr = -2.0 * (_bernoulli_ll(n0, n1, hits.alpha) - _bernoulli_ll(n0, n1, pi_hat))
    flags = ("small_sample",) if n1 < SMALL_SAMPLE_HITS else ()
    return _result("uc", lr, 1, {"n": n, "violations": n1, "pi_hat": pi_hat}, flags)


# --------------------------------------------------------------------------
# Portmanteau
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class SerialDependenceStats:
    lags: np.ndarray
    autocovariances: np.ndarray  # known-alpha centring
    centered_stats: np.ndarray  # sample-mean centring
    autocorrelations: np.ndarray
    n_effective: int


def serial_dependence(hits: HitSequence, max_lag: int) -> SerialDependenceStats:
    h = hits.hits.astype(float)
    n = h.size
    a = hits.alpha
    lags = np.arange(1, max_lag + 1)
    gamma = np.empty(max_lag)
    zeta = np.empty(max_lag)
    rho = np.zeros(max_lag)
    dev = h - h.mean()
    denom = float(dev @ dev)
    for i, w in enumerate(lags):
        cur, lag = h[w:], h[:-w]
        scale = 1.0 / math.sqrt(n - w)
        gamma[i] = scale * float((cur - a) @ (lag - a))
        zeta[i] = scale * float((cur - cur.mean()) @ (lag - lag.mean()))
        if denom > 0:
            rho[i] = float(dev[w:] @ dev[:-w]) / denom
    return SerialDependenceStats(lags, gamma, zeta, rho, n)


def independence_portmanteau(hits: HitSequence, max_lag: int = 5) -> TestResult:
    n = len(hits)
    if max_lag < 1:
        raise ValidationError("max_lag must be >= 1")
    if n <= max_lag + 5:
        raise InsufficientData(f"need more than {max_lag + 5} observations, have {n}")
    if hits.count in (0, n):
        return _result("portmanteau", 0.0, max_lag,
                       {"joint_statistic": 0.0, "joint_p_value": 1.0}, ("degenerate_hits",))
    sd = serial_dependence(hits, max_lag)
    w = sd.lags
    lb = n * (n + 2.0) * float(np.sum(sd.autocorrelations ** 2 / (n - w)))
    v = hits.alpha * (1.0 - hits.alpha)
    joint = float(np.sum((sd.autocovariances / v) ** 2))
    comps = {
        "joint_statistic": joint,
        "joint_p_value": float(chi2.sf(joint, max_lag)),
        "autocorrelations": sd.autocorrelations.tolist(),
        "autocovariances": sd.autocovariances.tolist(),
        "centered": sd.centered_stats.tolist(),
    }
    flags = ("small_sample",) if hits.count < SMALL_SAMPLE_HITS else ()
    return _result("portmanteau", lb, max_lag, comps, flags)


# --------------------------------------------------------------------------
# Generalised Markov test
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class MarkovCounts:
    """Transition counts; row 0 is "no hit in the last m days", row j is
    "last hit j days ago"; columns are today's outcome (0, 1).

    For m = 1: Q00 = counts[0, 0], Q01 = counts[0, 1], Q10 = counts[1, 0],
    Q11 = counts[1, 1].
    """

    order: int
    counts: np.ndarray

    @classmethod
    def from_hits(cls, hits: HitSequence, order: int = 1) -> "MarkovCounts":
        return cls(order, _kernels.markov_counts(hits.hits, order))

    @classmethod
    def order1(cls, q00: int, q01: int, q10: int, q11: int) -> "MarkovCounts":
        return cls(1, np.array([[q00, q01], [q10, q11]], dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def markov_statistics(counts: MarkovCounts, alpha: float) -> dict:
    """Log-likelihoods and both LR statistics from transition counts."""
    c = counts.counts.astype(float)
    row = c.sum(axis=1)
    seen = row > 0
    p_state = np.divide(c[:, 1], row, out=np.zeros_like(row), where=seen)
    ll_u = float(np.sum(xlogy(c[:, 0], 1.0 - p_state) + xlogy(c[:, 1], p_state)))
    n0, n1 = c[:, 0].sum(), c[:, 1].sum()
    pi_hat = n1 / (n0 + n1)
    ll_pi = _bernoulli_ll(n0, n1, pi_hat)
    ll_alpha = _bernoulli_ll(n0, n1, alpha)
    k = int(seen.sum())
    return {
        "ll_unrestricted": ll_u,
        "ll_pi": ll_pi,
        "ll_alpha": ll_alpha,
        "lr_ind": -2.0 * (ll_pi - ll_u),
        "lr_cc": -2.0 * (ll_alpha - ll_u),
        "df_ind": k - 1,
        "df_cc": k,
        "pi_hat": pi_hat,
        "state_probabilities": p_state.tolist(),
        "unobserved_states": int((~seen).sum()),
    }


def markov_test(hits: HitSequence, order: int = 1) -> TestResult:
    """Independence LR (conditional vs single-probability model) as the main
    statistic; the conditional-coverage LR against alpha is in components."""
    n = len(hits)
    if order < 1:
        raise ValidationError("order must be >= 1")
    if n <= order + 10:
        raise InsufficientData(f"need more than {order + 10} observations, have {n}")
    counts = MarkovCounts.from_hits(hits, order)
    st = markov_statistics(counts, hits.alpha)
    flags = []
    if st["unobserved_states"]:
        flags.append("unobserved_history")
    if hits.count < SMALL_SAMPLE_HITS:
        flags.append("small_sample")
    lr_cc = max(st["lr_cc"], 0.0)
    comps = {
        "lr_ind": st["lr_ind"],
        "lr_cc": lr_cc,
        "df_cc": st["df_cc"],
        "p_cc": float(chi2.sf(lr_cc, st["df_cc"])) if st["df_cc"] > 0 else 1.0,
        "pi_hat": st["pi_hat"],
        "state_probabilities": st["state_probabilities"],
        "counts": counts.counts.tolist(),
    }
    return _result(f"markov_{order}", st["lr_ind"], st["df_ind"], comps, flags)


# --------------------------------------------------------------------------
# Geometric duration test
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GeometricParams:
    a: float
    b: float = 1.0
    c: float = 0.0


@dataclass(frozen=True)
class DurationData:
    """Days at risk after the first hit, one row per day.

    ``dur`` counts days since the last hit (1 on the day after a hit),
    ``cov`` is |VaR| on the first day of the spell, ``event`` marks hits.
    The open spell after the last hit is included (right censoring).
    ``day_rows`` and ``duration_rows`` are the kernel layouts: one row per
    day, and one row per distinct duration (valid only when c = 0).
    """

    dur: np.ndarray
    cov: np.ndarray
    event: np.ndarray
    n_complete: int
    censored_days: int
    day_rows: tuple = ()
    duration_rows: tuple = ()


def duration_data(hits: np.ndarray, var_values: np.ndarray) -> DurationData:
    h = np.asarray(hits, dtype=np.int64)
    v = np.abs(np.asarray(var_values, dtype=float))
    idx = np.flatnonzero(h)
    n = h.size
    starts = idx + 1
    ends = np.append(idx[1:], n - 1)  # inclusive last day of each spell
    lengths = ends - starts + 1
    keep = lengths > 0
    starts, ends, lengths = starts[keep], ends[keep], lengths[keep]
    total = int(lengths.sum())
    dur = np.empty(total)
    cov = np.empty(total)
    event = np.zeros(total, dtype=np.bool_)
    pos = 0
    for s, e, L in zip(starts, ends, lengths):
        dur[pos:pos + L] = np.arange(1, L + 1)
        cov[pos:pos + L] = v[s]
        event[pos + L - 1] = bool(h[e])
        pos += L
    ev = event.astype(float)
    day_rows = (np.log(dur), cov, ev, 1.0 - ev)
    uniq, inv = np.unique(dur, return_inverse=True)
    n_ev = np.bincount(inv, weights=ev, minlength=uniq.size)
    n_all = np.bincount(inv, minlength=uniq.size).astype(float)
    duration_rows = (np.log(uniq), np.zeros(uniq.size), n_ev, n_all - n_ev)
    return DurationData(dur, cov, event, int(max(idx.size - 1, 0)),
                        int(n - 1 - idx[-1]) if idx.size else n, day_rows, duration_rows)


def _theta_to_params(theta: np.ndarray) -> GeometricParams:
    a = float(expit(theta[0]))
    b = math.exp(min(theta[1], 50.0)) if theta.size > 1 else 1.0
    c = math.expm1(min(abs(theta[2]), 50.0)) if theta.size > 2 else 0.0
    return GeometricParams(a, b, c)


def duration_loglik(data: DurationData, params: GeometricParams) -> float:
    rows = data.duration_rows if params.c == 0.0 else data.day_rows
    return _kernels.duration_loglik(*rows, params.a, params.b, params.c)


def _maximize(data: DurationData, starts: list[np.ndarray], step: float = 0.25):
    def negll(theta):
        ll = duration_loglik(data, _theta_to_params(theta))
        return -ll if math.isfinite(ll) else 1e300

    best_x, best_f, converged = None, math.inf, False
    for x0 in starts:
        k = x0.size
        simplex = np.vstack([x0] + [x0 + step * np.eye(k)[i] for i in range(k)])
        res = optimize.minimize(
            negll, x0, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-10,
                     "maxiter": 2000 * k, "maxfev": 4000 * k},
        )
        converged |= bool(res.success)
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return best_x, -best_f, converged


def geometric_var_test(hits: HitSequence, var: VarSeries | np.ndarray) -> TestResult:
    """Duration-based test with LR = LR_UC + LR_Dind + LR_Vind (df 1 each)."""
    var_values = var.var_values if isinstance(var, VarSeries) else np.asarray(var, dtype=float)
    if var_values.shape != hits.hits.shape:
        raise ValidationError("VaR values must align with the hit sequence")
    if hits.count < 3:
        raise TooFewViolations(f"need at least 3 violations, have {hits.count}")
    data = duration_data(hits.hits, var_values)
    alpha = hits.alpha
    n_events = int(data.event.sum())
    days = data.dur.size

    ll_null = duration_loglik(data, GeometricParams(alpha))
    a1 = n_events / days
    ll_uc = duration_loglik(data, GeometricParams(a1))

    # b free, c = 0
    t0 = np.array([logit(a1), 0.0])
    x2, ll_d, ok2 = _maximize(data, [t0, t0 + [0.5, -0.5], t0 + [-0.5, 0.5]])
    if ll_d < ll_uc:
        x2, ll_d = t0, ll_uc

    # b and c free, nested start from the c = 0 optimum
    t1 = np.append(x2, 0.0)
    x3, ll_full, ok3 = _maximize(data, [t1, t1 + [0.0, 0.0, 1.5], t1 + [-0.5, 0.0, 3.0]])
    if ll_full < ll_d:
        x3, ll_full = t1, ll_d

    lr_uc = -2.0 * (ll_null - ll_uc)
    lr_dind = -2.0 * (ll_uc - ll_d)
    lr_vind = -2.0 * (ll_d - ll_full)
    total = -2.0 * (ll_null - ll_full)
    p2, p3 = _theta_to_params(x2), _theta_to_params(x3)
    flags = []
    if not (ok2 and ok3):
        flags.append("optimizer_nonconvergence")
        warnings.warn("geometric test: Nelder-Mead did not converge; best values reported",
                      RuntimeWarning, stacklevel=2)
    if hits.count < SMALL_SAMPLE_HITS:
        flags.append("small_sample")
    comps = {
        "lr_uc": lr_uc, "lr_dind": lr_dind, "lr_vind": lr_vind,
        "p_uc": float(chi2.sf(max(lr_uc, 0.0), 1)),
        "p_dind": float(chi2.sf(max(lr_dind, 0.0), 1)),
        "p_vind": float(chi2.sf(max(lr_vind, 0.0), 1)),
        "a_uc": a1, "a_dind": p2.a, "b_dind": p2.b,
        "a": p3.a, "b": p3.b, "c": p3.c,
        "loglik_null": ll_null, "loglik_uc": ll_uc, "loglik_dind": ll_d, "loglik_full": ll_full,
        "complete_durations": data.n_complete,
    }
    return _result("geometric", total, 3, comps, flags)


def run_all(hits: HitSequence, var: VarSeries, max_lag: int = 5, order: int = 1) -> dict:
    """Every backtest keyed by name; a test that cannot run reports why."""
    out = {}
    for name, fn in (
        ("uc", lambda: uc_test(hits)),
        ("portmanteau", lambda: independence_portmanteau(hits, max_lag)),
        ("markov", lambda: markov_test(hits, order)),
        ("geometric", lambda: geometric_var_test(hits, var)),
    ):
        try:
            out[name] = fn().to_dict()
        except (InsufficientData, ValidationError) as exc:
            out[name] = {"skipped": str(exc)}
    return out
