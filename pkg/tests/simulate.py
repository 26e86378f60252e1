"""Hit-sequence generators for Monte-Carlo size and power checks."""
import numpy as np


def bernoulli_hits(rng, n, alpha):
    return (rng.random(n) < alpha).astype(np.int64)


def two_state_chain(rng, n, p01, p11):
    u = rng.random(n)
    h = np.zeros(n, dtype=np.int64)
    prev = 0
    for t in range(n):
        prev = int(u[t] < (p11 if prev else p01))
        h[t] = prev
    return h


def duration_hits(rng, n, a, b):
    """Hits with hazard min(a * d**(b-1), 1), d = days since the last hit."""
    u = rng.random(n)
    h = np.zeros(n, dtype=np.int64)
    d = 1
    for t in range(n):
        if u[t] < min(a * d ** (b - 1.0), 1.0):
            h[t] = 1
            d = 1
        else:
            d += 1
    return h
