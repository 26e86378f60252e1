"""Linear-Gaussian state-space filtering with a scalar measurement.

    y_s = Z_s x_s + d + e_s,          e_s ~ N(0, H)
    x_s = T x_{s-1} + c + u_s,        u_s ~ N(0, Q)

Measurement and state disturbances are independent. ``x0``/``P0`` describe
the state before the first transition. The dynamic-beta model uses
``x = [alpha, beta]``, ``Z_s = [1, r_m,s]``, ``T = I`` and ``c = d = 0``.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize

from . import _kernels
from .errors import ComputationError, DateMisalignment, InsufficientData, ValidationError
from .market_data import ReturnSeries

F_FLOOR = 1e-12
DIFFUSE_SCALE = 1e6
BURN_IN = 10
MIN_OBS = 30
LOG_VAR_RANGE = (-60.0, 30.0)  # clamp for log-variance coordinates


class NonFiniteInput(ValidationError):
    pass


class SingularInnovation(ComputationError):
    pass


class OptimizerNonConvergence(ComputationError):
    pass


def _psd(M: np.ndarray, name: str, tol: float = 1e-10) -> None:
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(np.abs(M).max(), 1.0)):
        raise ValidationError(f"{name} must be symmetric")
    if M.size and np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -tol * max(np.abs(M).max(), 1.0):
        raise ValidationError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class KalmanModel:
    T: np.ndarray
    H: float
    Q: np.ndarray
    x0: np.ndarray
    P0: np.ndarray
    c: np.ndarray | None = None
    d: float = 0.0

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        k = T.shape[0]
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        c = np.zeros(k) if self.c is None else np.atleast_1d(np.asarray(self.c, dtype=float))
        for name, arr, shape in (("T", T, (k, k)), ("Q", Q, (k, k)), ("P0", P0, (k, k)),
                                 ("x0", x0, (k,)), ("c", c, (k,))):
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput(f"{name} has non-finite entries")
        if not (math.isfinite(self.H) and self.H >= 0.0):
            raise ValidationError(f"H must be finite and >= 0, got {self.H}")
        _psd(Q, "Q")
        _psd(P0, "P0")
        for name, arr in (("T", T), ("Q", Q), ("P0", P0), ("x0", x0), ("c", c)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "H", float(self.H))
        object.__setattr__(self, "d", float(self.d))

    @property
    def k(self) -> int:
        return self.x0.size

    @classmethod
    def random_walk(cls, H: float, q, x0=None, p0: float = DIFFUSE_SCALE) -> "KalmanModel":
        """T = I, c = 0, diagonal Q; diffuse prior by default."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        k = q.size
        x0 = np.zeros(k) if x0 is None else x0
        return cls(np.eye(k), H, np.diag(q), x0, p0 * np.eye(k))

    def to_dict(self) -> dict:
        return {"T": self.T.tolist(), "c": self.c.tolist(), "d": self.d, "H": self.H,
                "Q": self.Q.tolist(), "x0": self.x0.tolist(), "P0": self.P0.tolist()}


@dataclass(frozen=True)
class KalmanState:
    x_pred: np.ndarray
    P_pred: np.ndarray
    v: float
    F: float
    x_filt: np.ndarray
    P_filt: np.ndarray


@dataclass(frozen=True)
class FilterOutput:
    """Stacked filter quantities; index s gives the state after observation s."""

    x_pred: np.ndarray
    P_pred: np.ndarray
    v: np.ndarray
    F: np.ndarray
    x_filt: np.ndarray
    P_filt: np.ndarray
    loglik: float
    floored: int = 0

    def __len__(self) -> int:
        return self.v.size

    def __getitem__(self, s: int) -> KalmanState:
        return KalmanState(self.x_pred[s], self.P_pred[s], float(self.v[s]), float(self.F[s]),
                           self.x_filt[s], self.P_filt[s])

    @property
    def states(self) -> list[KalmanState]:
        return [self[s] for s in range(len(self))]

    def standardized_innovations(self, burn_in: int = BURN_IN) -> np.ndarray:
        return (self.v / np.sqrt(self.F))[burn_in:]


def _design(Z, n: int, k: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(n, 1) if k == 1 else np.broadcast_to(Z, (n, k))
    if Z.shape != (n, k):
        raise ValidationError(f"design has shape {Z.shape}, expected {(n, k)}")
    return np.ascontiguousarray(Z)


def kalman_filter(model: KalmanModel, y, Z, strict: bool = False) -> FilterOutput:
    """Run the filter over ``y`` with design rows ``Z`` (shape (n, k)).

    The log-likelihood sums every step, burn-in included. Innovation
    variances below ``F_FLOOR`` are floored and counted; with ``strict``
    they raise :class:`SingularInnovation` instead.
    """
    y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
    n = y.size
    Zm = _design(Z, n, model.k)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Zm))):
        raise NonFiniteInput("observations and designs must be finite")
    out = _kernels.kalman_filter(y, Zm, model.d, model.T, model.c, model.H, model.Q,
                                 model.x0, model.P0, F_FLOOR)
    x_pred, P_pred, v, F, x_filt, P_filt, loglik, floored = out
    if floored:
        if strict:
            raise SingularInnovation(f"{floored} innovation variance(s) below {F_FLOOR}")
        warnings.warn(f"{floored} innovation variance(s) floored at {F_FLOOR}", RuntimeWarning,
                      stacklevel=2)
    return FilterOutput(x_pred, P_pred, v, F, x_filt, P_filt, float(loglik), int(floored))


# --------------------------------------------------------------------------
# Maximum likelihood for H and diagonal Q (T = I, c = d = 0)
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class NoiseFit:
    model: KalmanModel
    loglik: float
    converged: bool
    n_evals: int
    flags: tuple[str, ...] = ()


def _ols_residual_var(y: np.ndarray, Z: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    r = y - Z @ coef
    return max(float(r @ r) / max(y.size - Z.shape[1], 1), 1e-300)


def estimate_noise_ml(y, Z, p0: float = DIFFUSE_SCALE, restarts: int = 3,
                      x0=None) -> NoiseFit:
    """Fit H and diag(Q) by Nelder-Mead on the filter log-likelihood.

    Coordinates are ``(ln H, ln(q_1/H), ..., ln(q_k/H))``. Restarts begin
    from fixed offsets around the OLS residual variance, so the result is
    a deterministic function of the data. State noises whose optimum sits
    on the zero boundary are set to exactly 0 when that does not lower
    the likelihood.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n < MIN_OBS:
        raise InsufficientData(f"need at least {MIN_OBS} observations, have {n}")
    k = 1 if np.ndim(Z) == 1 else np.shape(Z)[1]
    Zm = _design(Z, n, k)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Zm))):
        raise NonFiniteInput("observations and designs must be finite")
    x0 = np.zeros(k) if x0 is None else np.asarray(x0, dtype=float)
    eye = np.eye(k)
    P0 = p0 * eye
    lo, hi = LOG_VAR_RANGE

    def unpack(theta):
        th = np.clip(theta, lo, hi)
        H = math.exp(th[0])
        return H, H * np.exp(th[1:])

    def loglik(H, q):
        out = _kernels.kalman_filter(y, Zm, 0.0, eye, np.zeros(k), H, np.diag(q), x0, P0, F_FLOOR)
        return float(out[6])

    def negll(theta):
        ll = loglik(*unpack(theta))
        return -ll if math.isfinite(ll) else 1e300

    s2 = math.log(_ols_residual_var(y, Zm))
    starts = [np.r_[s2, np.full(k, -4.0)], np.r_[s2, np.full(k, -10.0)], np.r_[s2 - 0.5, np.full(k, -2.0)]]
    best, converged, evals = None, False, 0
    for x_start in starts[:max(restarts, 1)]:
        simplex = np.vstack([x_start] + [x_start + 1.0 * np.eye(k + 1)[i] for i in range(k + 1)])
        res = optimize.minimize(negll, x_start, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-6, "fatol": 1e-9,
                                         "maxiter": 4000 * (k + 1), "maxfev": 8000 * (k + 1)})
        evals += int(res.nfev)
        converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    H, q = unpack(best.x)
    ll = -float(best.fun)
    # boundary refinement: zero out state noises whose removal does not cost likelihood
    for i in np.argsort(q):
        trial = q.copy()
        trial[i] = 0.0
        ll_t = loglik(H, trial)
        if ll_t >= ll:
            q, ll = trial, ll_t
    flags = ()
    if not converged:
        flags = ("optimizer_nonconvergence",)
        warnings.warn("noise ML: Nelder-Mead did not converge; best values returned",
                      RuntimeWarning, stacklevel=2)
    model = KalmanModel(eye, H, np.diag(q), x0, P0)
    return NoiseFit(model, ll, converged, evals, flags)


# --------------------------------------------------------------------------
# Dynamic beta
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class BetaPath:
    dates: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    beta_se: np.ndarray
    model: KalmanModel
    loglik: float
    flags: tuple[str, ...] = field(default=())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "alpha", "beta", "beta_se"])
            for row in zip(self.dates.astype(str), self.alpha, self.beta, self.beta_se):
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])

    def summary(self) -> dict:
        return {"model": self.model.to_dict(), "loglik": self.loglik, "n": int(self.beta.size),
                "burn_in": BURN_IN, "flags": list(self.flags)}

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def dynamic_beta(stock: ReturnSeries, market: ReturnSeries,
                 model: KalmanModel | None = None) -> BetaPath:
    """Filtered alpha_t, beta_t for r_i = alpha_t + beta_t * r_m + e."""
    if not np.array_equal(stock.dates, market.dates):
        raise DateMisalignment("stock and market returns must share dates")
    n = len(stock)
    if n < MIN_OBS:
        raise InsufficientData(f"need at least {MIN_OBS} observations, have {n}")
    Z = np.column_stack([np.ones(n), market.values])
    flags: tuple[str, ...] = ()
    if model is None:
        fit = estimate_noise_ml(stock.values, Z)
        model, flags = fit.model, fit.flags
    elif model.k != 2:
        raise ValidationError("dynamic-beta model needs a 2-dimensional state")
    out = kalman_filter(model, stock.values, Z)
    if out.floored:
        flags = flags + ("floored_innovation",)
    se = np.sqrt(np.maximum(out.P_filt[:, 1, 1], 0.0))
    return BetaPath(stock.dates, out.x_filt[:, 0].copy(), out.x_filt[:, 1].copy(), se,
                    model, out.loglik, flags)


def rolling_ols_beta(stock: np.ndarray, market: np.ndarray, window: int = 60) -> np.ndarray:
    """Trailing-window OLS slope; entry t uses observations t-window+1..t."""
    x = sliding_window_view(np.asarray(market, dtype=float), window)
    y = sliding_window_view(np.asarray(stock, dtype=float), window)
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    sxx = (xc * xc).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = (xc * yc).sum(axis=1) / sxx
    out = np.full(len(stock), np.nan)
    out[window - 1:] = slope
    return out
