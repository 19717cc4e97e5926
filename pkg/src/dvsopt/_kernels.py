"""Hot loops: the brute-force lattice oracle and batched S3 robustness trials.

Every kernel exists twice, a numba ``@njit`` loop and a vectorised numpy
twin with identical floating-point operations, so both paths return
bit-identical results.  ``lattice_search`` and ``s3_trials`` dispatch on
``dvsopt._accel.USE_NUMBA``.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

FEAS_TOL = 1e-12
BISECT_ITERS = 100


# ---------------------------------------------------------------------------
# lattice oracle

@njit
def _lattice_search_numba(vg, r, x, k, imax, pmax, pmin, delta):
    m = int(math.floor(imax / delta + 1e-9))
    imax2 = imax * imax + FEAS_TOL
    best_v = -np.inf
    best_d = 0.0
    best_q = 0.0
    evaluated = 0
    feasible = 0
    for a in range(-m, m + 1):
        i_d = a * delta
        for b in range(-m, m + 1):
            i_q = b * delta
            evaluated += 1
            if i_d * i_d + i_q * i_q > imax2:
                continue
            s = r * i_q + x * i_d
            if abs(s) - vg > FEAS_TOL:
                continue
            arg = vg * vg - s * s
            if arg < 0.0:
                arg = 0.0
            v = math.sqrt(arg) + r * i_d - x * i_q
            if v < -FEAS_TOL:
                continue
            p = k * v * i_d
            if p > pmax + FEAS_TOL or p < pmin - FEAS_TOL:
                continue
            feasible += 1
            if v > best_v:
                best_v = v
                best_d = i_d
                best_q = i_q
    return best_d, best_q, best_v, evaluated, feasible


def _lattice_search_numpy(vg, r, x, k, imax, pmax, pmin, delta, rows_per_chunk=256):
    m = int(math.floor(imax / delta + 1e-9))
    steps = np.arange(-m, m + 1, dtype=np.float64)
    i_q = steps * delta
    imax2 = imax * imax + FEAS_TOL
    best_v = -np.inf
    best_d = 0.0
    best_q = 0.0
    feasible = 0
    n = steps.size
    for start in range(0, n, rows_per_chunk):
        i_d = (steps[start:start + rows_per_chunk] * delta)[:, None]
        s = r * i_q[None, :] + x * i_d
        arg = np.maximum(vg * vg - s * s, 0.0)
        v = np.sqrt(arg) + r * i_d - x * i_q[None, :]
        p = k * v * i_d
        ok = (
            (i_d * i_d + i_q[None, :] * i_q[None, :] <= imax2)
            & (np.abs(s) - vg <= FEAS_TOL)
            & (v >= -FEAS_TOL)
            & (p <= pmax + FEAS_TOL)
            & (p >= pmin - FEAS_TOL)
        )
        feasible += int(ok.sum())
        masked = np.where(ok, v, -np.inf)
        # argmax returns the first hit in row-major order: smallest id, then smallest iq
        flat = int(np.argmax(masked))
        row, col = divmod(flat, n)
        if masked[row, col] > best_v:
            best_v = float(masked[row, col])
            best_d = float(i_d[row, 0])
            best_q = float(i_q[col])
    return best_d, best_q, best_v, n * n, feasible


def lattice_search(vg, r, x, k, imax, pmax, pmin, delta):
    if _accel.USE_NUMBA:
        return _lattice_search_numba(vg, r, x, k, imax, pmax, pmin, delta)
    return _lattice_search_numpy(vg, r, x, k, imax, pmax, pmin, delta)


# ---------------------------------------------------------------------------
# S3 robustness trials
#
# Each trial holds an impedance estimate (r_hat, x_hat).  The open-loop
# controller applies the S3 closed form built from the estimate.  The
# closed-loop controller keeps iq on an affine law iq = a*id + b derived from
# the estimate and bisects id so the TRUE power equals pmax.
#   law 0: b from the S3 closed form with measured pmax, a = 0
#   law 1: the estimated zero-dV/diq line, a = -x_hat/r_hat

LAW_POWER = 0
LAW_LINE = 1


@njit
def _true_v(vg, r, x, i_d, i_q):
    s = r * i_q + x * i_d
    if abs(s) - vg > FEAS_TOL:
        return np.nan
    arg = vg * vg - s * s
    if arg < 0.0:
        arg = 0.0
    return math.sqrt(arg) + r * i_d - x * i_q


@njit
def _s3_trials_numba(vg, r, x, k, imax, pmax, r_hat, x_hat, law):
    n = r_hat.size
    v_open = np.empty(n)
    p_open = np.empty(n)
    i_open = np.empty(n)
    v_closed = np.empty(n)
    id_closed = np.empty(n)
    iq_closed = np.empty(n)
    ok_closed = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        rh = r_hat[t]
        xh = x_hat[t]
        zh = math.hypot(rh, xh)
        nu = math.sqrt(vg * vg + 4.0 * rh * pmax / k)
        d0 = (nu - vg) / (2.0 * zh)
        q0 = -(xh / (2.0 * rh * zh)) * (vg + nu)
        v = _true_v(vg, r, x, d0, q0)
        v_open[t] = v
        p_open[t] = k * v * d0
        i_open[t] = math.sqrt(d0 * d0 + q0 * q0)

        if law == LAW_POWER:
            a = 0.0
            b = q0
        else:
            a = -xh / rh
            b = -xh * vg / (rh * zh)
        # admissible id: current disc and stability strip, intersected with id >= 0
        lo = 0.0
        hi = imax
        qa = 1.0 + a * a
        qb = 2.0 * a * b
        qc = b * b - imax * imax
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            v_closed[t] = np.nan
            id_closed[t] = np.nan
            iq_closed[t] = np.nan
            continue
        sq = math.sqrt(disc)
        lo = max(lo, (-qb - sq) / (2.0 * qa))
        hi = min(hi, (-qb + sq) / (2.0 * qa))
        slope = x + r * a
        icpt = r * b
        if slope > 0.0:
            lo = max(lo, (-vg - icpt) / slope)
            hi = min(hi, (vg - icpt) / slope)
        elif slope < 0.0:
            lo = max(lo, (vg - icpt) / slope)
            hi = min(hi, (-vg - icpt) / slope)
        elif abs(icpt) > vg:
            hi = -1.0
        g_lo = k * _true_v(vg, r, x, lo, a * lo + b) * lo - pmax
        g_hi = k * _true_v(vg, r, x, hi, a * hi + b) * hi - pmax
        if not (lo <= hi and g_lo <= 0.0 and g_hi >= 0.0):
            v_closed[t] = np.nan
            id_closed[t] = np.nan
            iq_closed[t] = np.nan
            continue
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            g_mid = k * _true_v(vg, r, x, mid, a * mid + b) * mid - pmax
            if g_mid < 0.0:
                lo = mid
            else:
                hi = mid
        d = 0.5 * (lo + hi)
        q = a * d + b
        v_closed[t] = _true_v(vg, r, x, d, q)
        id_closed[t] = d
        iq_closed[t] = q
        ok_closed[t] = True
    return v_open, p_open, i_open, v_closed, id_closed, iq_closed, ok_closed


def _true_v_np(vg, r, x, i_d, i_q):
    s = r * i_q + x * i_d
    arg = np.maximum(vg * vg - s * s, 0.0)
    return np.where(np.abs(s) - vg > FEAS_TOL, np.nan, np.sqrt(arg) + r * i_d - x * i_q)


def _s3_trials_numpy(vg, r, x, k, imax, pmax, r_hat, x_hat, law):
    rh = np.asarray(r_hat, dtype=np.float64)
    xh = np.asarray(x_hat, dtype=np.float64)
    zh = np.hypot(rh, xh)
    nu = np.sqrt(vg * vg + 4.0 * rh * pmax / k)
    d0 = (nu - vg) / (2.0 * zh)
    q0 = -(xh / (2.0 * rh * zh)) * (vg + nu)
    v_open = _true_v_np(vg, r, x, d0, q0)
    p_open = k * v_open * d0
    i_open = np.sqrt(d0 * d0 + q0 * q0)

    if law == LAW_POWER:
        a = np.zeros_like(rh)
        b = q0
    else:
        a = -xh / rh
        b = -xh * vg / (rh * zh)
    qa = 1.0 + a * a
    qb = 2.0 * a * b
    qc = b * b - imax * imax
    disc = qb * qb - 4.0 * qa * qc
    sq = np.sqrt(np.maximum(disc, 0.0))
    lo = np.maximum(0.0, (-qb - sq) / (2.0 * qa))
    hi = np.minimum(imax, (-qb + sq) / (2.0 * qa))
    slope = x + r * a
    icpt = r * b
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = slope > 0.0
        neg = slope < 0.0
        lo = np.where(pos, np.maximum(lo, (-vg - icpt) / slope), lo)
        hi = np.where(pos, np.minimum(hi, (vg - icpt) / slope), hi)
        lo = np.where(neg, np.maximum(lo, (vg - icpt) / slope), lo)
        hi = np.where(neg, np.minimum(hi, (-vg - icpt) / slope), hi)
    hi = np.where(~pos & ~neg & (np.abs(icpt) > vg), -1.0, hi)
    g_lo = k * _true_v_np(vg, r, x, lo, a * lo + b) * lo - pmax
    g_hi = k * _true_v_np(vg, r, x, hi, a * hi + b) * hi - pmax
    ok = (disc >= 0.0) & (lo <= hi) & (g_lo <= 0.0) & (g_hi >= 0.0)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        g_mid = k * _true_v_np(vg, r, x, mid, a * mid + b) * mid - pmax
        below = g_mid < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    d = 0.5 * (lo + hi)
    q = a * d + b
    v_closed = np.where(ok, _true_v_np(vg, r, x, d, q), np.nan)
    return (
        v_open, p_open, i_open,
        v_closed, np.where(ok, d, np.nan), np.where(ok, q, np.nan), ok,
    )


def s3_trials(vg, r, x, k, imax, pmax, r_hat, x_hat, law=LAW_POWER):
    r_hat = np.ascontiguousarray(r_hat, dtype=np.float64)
    x_hat = np.ascontiguousarray(x_hat, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _s3_trials_numba(vg, r, x, k, imax, pmax, r_hat, x_hat, law)
    return _s3_trials_numpy(vg, r, x, k, imax, pmax, r_hat, x_hat, law)
