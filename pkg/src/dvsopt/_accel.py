"""Numba switch.

Set ``DVSOPT_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms without an LLVM build of numba.
"""
import os

_disabled = os.environ.get("DVSOPT_DISABLE_NUMBA", "0").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

USE_NUMBA = numba is not None and not _disabled


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    The compiled object is built regardless of ``USE_NUMBA`` so that the
    benchmark and parity tests can exercise both paths in one process.
    """
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
