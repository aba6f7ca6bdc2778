"""Optional numba acceleration.

Kernels in :mod:`ncrflow.kernels` are written in the numba-compatible subset
of numpy.  They are compiled with ``numba.njit`` when numba is importable and
the environment variable ``NCRFLOW_JIT`` is not set to ``0``; otherwise they
run as plain Python/numpy.
"""

import os

_FLAG = os.environ.get("NCRFLOW_JIT", "1").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def jit(func):
    """Compile ``func`` with numba in nopython mode when enabled."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def py_func(func):
    """Return the uncompiled Python function behind a (possibly) jitted one."""
    return getattr(func, "py_func", func)
