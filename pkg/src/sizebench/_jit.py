"""JIT switch.

Hot loops live in :mod:`sizebench._kernels` in two flavours: an explicit-loop
version compiled with numba and a pure-numpy version. Setting
``SIZEBENCH_DISABLE_JIT=1`` (or not having numba installed) selects the numpy
path everywhere.
"""
import os

_FLAG = os.environ.get("SIZEBENCH_DISABLE_JIT", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available; otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def select(jit_impl, numpy_impl):
    return jit_impl if JIT_ENABLED else numpy_impl
