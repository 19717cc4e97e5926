from __future__ import annotations

import math
from typing import Callable

from .errors import RootNotBracketed


def bisect(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of ``f`` on ``[lo, hi]`` by plain bisection.

    Requires a sign change over the bracket; an exact zero at either end is
    returned as-is.  Bisection is used over faster schemes because the
    callers only guarantee continuity, not monotonicity.
    """
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or (f_lo > 0) == (f_hi > 0):
        raise RootNotBracketed(f"no sign change on [{lo!r}, {hi!r}]: f = ({f_lo!r}, {f_hi!r})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol or mid in (lo, hi):
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_hi > 0):
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)
