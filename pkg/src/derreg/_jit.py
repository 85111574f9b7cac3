"""
JIT switch for the hot kernels.

Set ``DERREG_DISABLE_JIT=1`` to run the pure-numpy kernels instead of the
numba-compiled ones (useful for debugging and for the benchmark).
"""

import os

JIT_ENABLED = os.environ.get("DERREG_DISABLE_JIT", "0").lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


def backend() -> str:
    return "numba" if JIT_ENABLED else "numpy"
