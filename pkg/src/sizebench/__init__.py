"""Backtesting and risk analytics for long/short position sizing.

Modules: :mod:`market_data`, :mod:`indicators`, :mod:`sizing`, :mod:`risk`,
:mod:`vartests`, :mod:`kalman`, :mod:`engine`, :mod:`cli`.
"""
from ._jit import JIT_ENABLED

__version__ = "0.1.0"

__all__ = ["JIT_ENABLED", "__version__"]
