"""Hot numeric kernels.

Every kernel comes as ``<name>_jit`` (explicit loops, numba-compiled) and
``<name>_np`` (numpy / scipy vectorised or matrix-op form). The public name
is bound to one of them according to :data:`sizebench._jit.JIT_ENABLED`.
Both variants must agree to rounding; ``tests/test_kernels.py`` checks that.
"""
import math

import numpy as np
from scipy.signal import lfilter

from ._jit import njit, select

LOG_2PI = math.log(2.0 * math.pi)
HAZARD_EPS = 1e-12


# --------------------------------------------------------------------------
# Kalman filter, scalar measurement, k-dimensional state
# --------------------------------------------------------------------------
@njit
def kalman_filter_jit(y, Z, d, T, c, H, Q, x0, P0, f_floor):
    n = y.shape[0]
    k = x0.shape[0]
    x_pred = np.empty((n, k))
    P_pred = np.empty((n, k, k))
    x_filt = np.empty((n, k))
    P_filt = np.empty((n, k, k))
    v_out = np.empty(n)
    F_out = np.empty(n)
    x = x0.copy()
    P = P0.copy()
    loglik = 0.0
    floored = 0
    tmp = np.empty((k, k))
    pz = np.empty(k)
    for s in range(n):
        # prior
        for i in range(k):
            acc = c[i]
            for j in range(k):
                acc += T[i, j] * x[j]
            x_pred[s, i] = acc
        for i in range(k):
            for j in range(k):
                acc = 0.0
                for l in range(k):
                    acc += P[i, l] * T[j, l]
                tmp[i, j] = acc
        for i in range(k):
            for j in range(k):
                acc = Q[i, j]
                for l in range(k):
                    acc += T[i, l] * tmp[l, j]
                P_pred[s, i, j] = acc
        # innovation
        zx = 0.0
        for i in range(k):
            zx += Z[s, i] * x_pred[s, i]
        v = y[s] - zx - d
        for i in range(k):
            acc = 0.0
            for j in range(k):
                acc += P_pred[s, i, j] * Z[s, j]
            pz[i] = acc
        F = H
        for i in range(k):
            F += Z[s, i] * pz[i]
        if F < f_floor:
            F = f_floor
            floored += 1
        v_out[s] = v
        F_out[s] = F
        # posterior
        for i in range(k):
            x[i] = x_pred[s, i] + pz[i] * v / F
            x_filt[s, i] = x[i]
        for i in range(k):
            for j in range(k):
                P[i, j] = P_pred[s, i, j] - pz[i] * pz[j] / F
        for i in range(k):
            for j in range(i + 1, k):
                avg = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = avg
                P[j, i] = avg
        for i in range(k):
            for j in range(k):
                P_filt[s, i, j] = P[i, j]
        loglik += -0.5 * LOG_2PI - 0.5 * math.log(F) - 0.5 * v * v / F
    return x_pred, P_pred, v_out, F_out, x_filt, P_filt, loglik, floored


def kalman_filter_np(y, Z, d, T, c, H, Q, x0, P0, f_floor):
    n = y.shape[0]
    k = x0.shape[0]
    x_pred = np.empty((n, k))
    P_pred = np.empty((n, k, k))
    x_filt = np.empty((n, k))
    P_filt = np.empty((n, k, k))
    v_out = np.empty(n)
    F_out = np.empty(n)
    x = np.array(x0, dtype=float)
    P = np.array(P0, dtype=float)
    loglik = 0.0
    floored = 0
    for s in range(n):
        xp = T @ x + c
        Pp = T @ P @ T.T + Q
        z = Z[s]
        v = y[s] - z @ xp - d
        pz = Pp @ z
        F = z @ pz + H
        if F < f_floor:
            F = f_floor
            floored += 1
        x = xp + pz * (v / F)
        P = Pp - np.outer(pz, pz) / F
        P = 0.5 * (P + P.T)
        x_pred[s], P_pred[s], x_filt[s], P_filt[s] = xp, Pp, x, P
        v_out[s], F_out[s] = v, F
        loglik += -0.5 * LOG_2PI - 0.5 * math.log(F) - 0.5 * v * v / F
    return x_pred, P_pred, v_out, F_out, x_filt, P_filt, loglik, floored


kalman_filter = select(kalman_filter_jit, kalman_filter_np)


# --------------------------------------------------------------------------
# Duration hazard log-likelihood. Rows are (duration, covariate) cells with
# event / survival counts; a day-level layout has one row per day at risk.
# --------------------------------------------------------------------------
@njit
def duration_loglik_jit(log_dur, cov, n_event, n_survive, a, b, c):
    ll = 0.0
    for i in range(log_dur.shape[0]):
        lam = a * math.exp((b - 1.0) * log_dur[i] + c * cov[i])
        if lam < HAZARD_EPS:
            lam = HAZARD_EPS
        elif lam > 1.0 - HAZARD_EPS:
            lam = 1.0 - HAZARD_EPS
        if n_event[i] > 0.0:
            ll += n_event[i] * math.log(lam)
        if n_survive[i] > 0.0:
            ll += n_survive[i] * math.log1p(-lam)
    return ll


def duration_loglik_np(log_dur, cov, n_event, n_survive, a, b, c):
    lam = a * np.exp((b - 1.0) * log_dur + c * cov)
    lam = np.clip(lam, HAZARD_EPS, 1.0 - HAZARD_EPS)
    return float(n_event @ np.log(lam) + n_survive @ np.log1p(-lam))


duration_loglik = select(duration_loglik_jit, duration_loglik_np)


# --------------------------------------------------------------------------
# SMA-seeded exponential recursion: out[w-1] = mean(x[:w]),
# out[t] = alpha * x[t] + (1 - alpha) * out[t-1]
# --------------------------------------------------------------------------
@njit
def seeded_ema_jit(x, window, alpha):
    n = x.shape[0]
    out = np.full(n, np.nan)
    if n < window:
        return out
    acc = 0.0
    for i in range(window):
        acc += x[i]
    prev = acc / window
    out[window - 1] = prev
    for t in range(window, n):
        prev = alpha * x[t] + (1.0 - alpha) * prev
        out[t] = prev
    return out


def seeded_ema_np(x, window, alpha):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape[0], np.nan)
    if x.shape[0] < window:
        return out
    seed = x[:window].sum() / window
    out[window - 1] = seed
    if x.shape[0] > window:
        tail, _ = lfilter([alpha], [1.0, alpha - 1.0], x[window:], zi=[(1.0 - alpha) * seed])
        out[window:] = tail
    return out


seeded_ema = select(seeded_ema_jit, seeded_ema_np)


# --------------------------------------------------------------------------
# Parabolic stop-and-reverse (Wilder)
# --------------------------------------------------------------------------
def _parabolic_sar_loop(high, low, close, af_start, af_step, af_max):
    n = high.shape[0]
    out = np.full(n, np.nan)
    if n < 2:
        return out
    up = close[1] >= close[0]
    if up:
        sar = low[0]
        ep = max(high[0], high[1])
    else:
        sar = high[0]
        ep = min(low[0], low[1])
    af = af_start
    out[1] = sar
    for t in range(2, n):
        sar = sar + af * (ep - sar)
        if up:
            sar = min(sar, low[t - 1], low[t - 2])
            if low[t] < sar:
                up = False
                sar = ep
                ep = low[t]
                af = af_start
            elif high[t] > ep:
                ep = high[t]
                af = min(af + af_step, af_max)
        else:
            sar = max(sar, high[t - 1], high[t - 2])
            if high[t] > sar:
                up = True
                sar = ep
                ep = high[t]
                af = af_start
            elif low[t] < ep:
                ep = low[t]
                af = min(af + af_step, af_max)
        out[t] = sar
    return out


parabolic_sar_jit = njit(_parabolic_sar_loop)
# no vectorised form exists for the state machine; the fallback is the plain loop
parabolic_sar_np = _parabolic_sar_loop
parabolic_sar = select(parabolic_sar_jit, parabolic_sar_np)


# --------------------------------------------------------------------------
# Generalised Markov transition counts.
# state 0: no hit in the previous m days; state j (1..m): last hit j days ago.
# counts[state, outcome]
# --------------------------------------------------------------------------
@njit
def markov_counts_jit(hits, m):
    counts = np.zeros((m + 1, 2), dtype=np.int64)
    for q in range(m, hits.shape[0]):
        state = 0
        for j in range(1, m + 1):
            if hits[q - j] == 1:
                state = j
                break
        counts[state, hits[q]] += 1
    return counts


def markov_counts_np(hits, m):
    hits = np.asarray(hits, dtype=np.int64)
    n = hits.shape[0]
    state = np.zeros(n - m, dtype=np.int64)
    for j in range(m, 0, -1):
        state = np.where(hits[m - j:n - j] == 1, j, state)
    flat = np.bincount(state * 2 + hits[m:], minlength=2 * (m + 1))
    return flat.reshape(m + 1, 2).astype(np.int64)


markov_counts = select(markov_counts_jit, markov_counts_np)
