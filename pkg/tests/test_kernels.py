"""Compiled and numpy kernels agree to rounding, and the env flag selects between them."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sizebench import _jit, _kernels as kn

pytestmark = pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.integers(1, 3))
def test_kalman_filter_parity(seed, n, k):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(k, k))
    args = (rng.normal(size=n), rng.normal(size=(n, k)), float(rng.normal()),
            0.9 * np.eye(k) + 0.05 * rng.normal(size=(k, k)), rng.normal(size=k),
            float(rng.uniform(0.01, 1.0)), 0.1 * A @ A.T, rng.normal(size=k),
            np.eye(k) * rng.uniform(0.5, 5.0), 1e-12)
    a = kn.kalman_filter_jit(*args)
    b = kn.kalman_filter_np(*args)
    for u, v in zip(a[:6], b[:6]):
        np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-11)
    assert a[6] == pytest.approx(b[6], rel=1e-10, abs=1e-10)
    assert a[7] == b[7]


def test_kalman_floor_count_parity():
    args = (np.zeros(5), np.zeros((5, 1)), 0.0, np.eye(1), np.zeros(1), 0.0,
            np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), 1e-12)
    assert kn.kalman_filter_jit(*args)[7] == kn.kalman_filter_np(*args)[7] == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200),
       st.floats(1e-4, 0.9), st.floats(0.1, 2.0), st.floats(-50, 50))
def test_duration_loglik_parity(seed, n, a, b, c):
    rng = np.random.default_rng(seed)
    log_dur = np.log(rng.integers(1, 300, n).astype(float))
    cov = rng.uniform(-0.1, 0.1, n)
    ev = rng.integers(0, 3, n).astype(float)
    sv = rng.integers(0, 40, n).astype(float)
    x = kn.duration_loglik_jit(log_dur, cov, ev, sv, a, b, c)
    y = kn.duration_loglik_np(log_dur, cov, ev, sv, a, b, c)
    assert x == pytest.approx(y, rel=1e-11, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 150), st.integers(1, 30))
def test_seeded_ema_parity(seed, n, w):
    x = np.random.default_rng(seed).normal(100, 5, n)
    alpha = 2.0 / (w + 1)
    np.testing.assert_allclose(kn.seeded_ema_jit(x, w, alpha), kn.seeded_ema_np(x, w, alpha),
                               rtol=1e-11, equal_nan=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 200))
def test_parabolic_sar_parity(seed, n):
    rng = np.random.default_rng(seed)
    close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))
    high = close * (1 + rng.uniform(0, 0.02, n))
    low = close * (1 - rng.uniform(0, 0.02, n))
    np.testing.assert_array_equal(kn.parabolic_sar_jit(high, low, close, 0.02, 0.02, 0.2),
                                  kn.parabolic_sar_np(high, low, close, 0.02, 0.02, 0.2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=0, max_size=80), st.integers(1, 6))
def test_markov_counts_parity(bits, m):
    hits = np.array(bits, dtype=np.int64)
    if hits.size < m:
        return
    a = kn.markov_counts_jit(hits, m)
    b = kn.markov_counts_np(hits, m)
    np.testing.assert_array_equal(a, b)
    assert a.sum() == hits.size - m


@pytest.mark.parametrize("flag,expected", [("1", "False"), ("0", "True")])
def test_env_flag_selects_path(flag, expected):
    env = dict(os.environ, SIZEBENCH_DISABLE_JIT=flag)
    code = ("from sizebench import _jit, _kernels as k; "
            "print(_jit.JIT_ENABLED, k.markov_counts is k.markov_counts_jit)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.split() == [expected, expected]
