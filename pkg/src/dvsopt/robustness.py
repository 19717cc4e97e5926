"""Optimality gap under grid-impedance estimation error.

The controller sees ``r_hat = (1+alpha)*r`` and ``x_hat = (1+beta)*x`` while
the physics uses the true ``r, x``.  The gap is ``V* - V_hat``, where ``V*``
is the optimum with perfect knowledge and ``V_hat`` the true voltage
produced by the controller's setpoint.
"""
from __future__ import annotations

import csv
import enum
import math
import sys
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from . import _kernels
from .errors import InfeasibleSetpoint, PreconditionViolated, RootNotBracketed
from .network import (
    PER_UNIT,
    CurrentSetpoint,
    GridModel,
    InverterLimits,
    PowerConvention,
    active_power,
    pcc_voltage,
)
from .rootfind import bisect
from .solver import Stage, compute_thresholds, decide_stage, s3_setpoint, solve

GAP_TOL = 1e-12
DEFAULT_VGS = tuple(round(0.1 * i, 1) for i in range(1, 9))
DEFAULT_SCRS = tuple(range(2, 11))


class GapMode(str, enum.Enum):
    S1_ANALYTIC = "S1_ANALYTIC"
    S3_OPEN_LOOP = "S3_OPEN_LOOP"
    S3_CLOSED_LOOP = "S3_CLOSED_LOOP"


class ClosedLoopLaw(str, enum.Enum):
    """How the closed-loop S3 controller builds its ``iq`` reference.

    ``POWER`` evaluates the S3 closed-form ``iq`` from the measured power
    (fixed per trial, ``id`` tracks power).  ``LINE`` ties ``iq`` to ``id``
    through the estimated zero-``dV/diq`` line.  Both agree on a perfect model.
    """

    POWER = "power"
    LINE = "line"

    @property
    def kernel_code(self) -> int:
        return _kernels.LAW_POWER if self is ClosedLoopLaw.POWER else _kernels.LAW_LINE


@dataclass(frozen=True)
class UncertaintyBand:
    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float

    def __post_init__(self):
        if self.alpha_lo > self.alpha_hi or self.beta_lo > self.beta_hi:
            raise ValueError("uncertainty band bounds are reversed")
        if min(self.alpha_lo, self.beta_lo) <= -1:
            raise ValueError("relative impedance errors must stay above -1")

    @classmethod
    def symmetric(cls, alpha: float, beta: Optional[float] = None) -> "UncertaintyBand":
        beta = alpha if beta is None else beta
        return cls(-abs(alpha), abs(alpha), -abs(beta), abs(beta))

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        alpha = rng.uniform(self.alpha_lo, self.alpha_hi, n)
        beta = rng.uniform(self.beta_lo, self.beta_hi, n)
        return alpha, beta


@dataclass(frozen=True)
class GapReport:
    v_true_opt: float
    v_achieved_worst: float
    gap_abs: float
    gap_pct: float
    mode: GapMode
    trials: int
    discarded_infeasible: int
    seed: Optional[int]
    mean_gap_pct: float = math.nan
    misdecided: int = 0
    vg: float = math.nan
    scr: float = math.nan
    r_over_x: float = math.nan


# ---------------------------------------------------------------------------
# S1: analytic worst case

def _s1_corner_setpoint(g: GridModel, i_max: float, alpha: float, beta: float) -> CurrentSetpoint:
    ratio = (1.0 + beta) / (1.0 + alpha)
    i_d = i_max / math.sqrt(1.0 + ratio**2 * (g.x / g.r) ** 2)
    i_q = -i_max / math.sqrt(1.0 + (g.r / g.x) ** 2 / ratio**2)
    return CurrentSetpoint(i_d, i_q)


def s1_trial(g_true: GridModel, g_est: GridModel, lim: InverterLimits) -> float:
    """True voltage when the S1 setpoint is computed from an estimated grid."""
    u = CurrentSetpoint(g_est.r / g_est.z * lim.i_max, -g_est.x / g_est.z * lim.i_max)
    return pcc_voltage(g_true, u)


def s1_gap_bound(
    g: GridModel, lim: InverterLimits, band: UncertaintyBand, c: PowerConvention = PER_UNIT
) -> GapReport:
    """Worst-case S1 gap: the error corners that rotate the current angle the most."""
    th = compute_thresholds(g, c, lim)
    if not th.c1(lim):
        raise PreconditionViolated("S1 gap bound needs the true parameters in the S1 regime")
    v_star = g.vg + g.z * lim.i_max
    corners = [
        pcc_voltage(g, _s1_corner_setpoint(g, lim.i_max, band.alpha_lo, band.beta_hi)),
        pcc_voltage(g, _s1_corner_setpoint(g, lim.i_max, band.alpha_hi, band.beta_lo)),
    ]
    worst = min(corners)
    gap = v_star - worst
    return GapReport(
        v_true_opt=v_star,
        v_achieved_worst=worst,
        gap_abs=gap,
        gap_pct=100.0 * gap / v_star,
        mode=GapMode.S1_ANALYTIC,
        trials=0,
        discarded_infeasible=0,
        seed=None,
        mean_gap_pct=100.0 * gap / v_star,
    )


def s1_gap_sweep(
    band: UncertaintyBand,
    vgs: Sequence[float] = DEFAULT_VGS,
    scrs: Sequence[float] = DEFAULT_SCRS,
    r_over_x: float = 2.0,
    i_max: float = 1.5,
) -> list[GapReport]:
    out = []
    for vg in vgs:
        for scr in scrs:
            g = GridModel.from_scr(vg, scr, r_over_x)
            # power is irrelevant to the S1 gap; choose it large enough to sit in S1
            p_b = compute_thresholds(g, PER_UNIT, InverterLimits(i_max, 1.0)).p_b
            rep = s1_gap_bound(g, InverterLimits(i_max, 2.0 * p_b), band)
            out.append(_with_case(rep, vg, scr, r_over_x))
    return out


def _with_case(rep: GapReport, vg: float, scr: float, r_over_x: float) -> GapReport:
    return GapReport(**{**rep.__dict__, "vg": vg, "scr": scr, "r_over_x": r_over_x})


# ---------------------------------------------------------------------------
# S3: single trials (scalar reference path)

def _require_s3(g: GridModel, c: PowerConvention, lim: InverterLimits) -> None:
    th = compute_thresholds(g, c, lim)
    if decide_stage(th, lim) is not Stage.S3:
        raise PreconditionViolated("S3 robustness trials need the true parameters in the S3 regime")


def s3_open_loop_trial(
    g_true: GridModel, g_est: GridModel, c: PowerConvention, lim: InverterLimits
) -> Optional[float]:
    """True voltage of the open-loop S3 setpoint, or ``None`` when it is physically infeasible.

    Infeasible means the true active power overshoots ``p_max`` (power
    imbalance), the current overshoots ``i_max``, or the point leaves the
    stability region.
    """
    _require_s3(g_true, c, lim)
    u = s3_setpoint(g_est, c, lim.p_max)
    try:
        v = pcc_voltage(g_true, u)
    except InfeasibleSetpoint:
        return None
    if c.k * v * u.i_d > lim.p_max + GAP_TOL or u.magnitude > lim.i_max + GAP_TOL:
        return None
    return v


def _affine_iq_law(g_est: GridModel, c: PowerConvention, p_max: float, law: ClosedLoopLaw) -> tuple[float, float]:
    if law is ClosedLoopLaw.POWER:
        return 0.0, s3_setpoint(g_est, c, p_max).i_q
    return -g_est.x / g_est.r, -g_est.x * g_est.vg / (g_est.r * g_est.z)


def closed_loop_setpoint(
    g_true: GridModel,
    g_est: GridModel,
    c: PowerConvention,
    lim: InverterLimits,
    law: ClosedLoopLaw = ClosedLoopLaw.POWER,
) -> CurrentSetpoint:
    """Steady state of the closed-loop S3 controller on the true grid.

    ``iq`` follows an affine law built from the estimate; ``id`` is whatever
    makes the true power equal ``p_max``, bracketed by the current disc and
    the stability strip.
    """
    a, b = _affine_iq_law(g_est, c, lim.p_max, law)
    qa, qb, qc = 1.0 + a * a, 2.0 * a * b, b * b - lim.i_max**2
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise RootNotBracketed("closed-loop iq law never enters the current disc")
    sq = math.sqrt(disc)
    lo = max(0.0, (-qb - sq) / (2 * qa))
    hi = min(lim.i_max, (-qb + sq) / (2 * qa))
    slope, icpt = g_true.x + g_true.r * a, g_true.r * b
    if slope > 0:
        lo, hi = max(lo, (-g_true.vg - icpt) / slope), min(hi, (g_true.vg - icpt) / slope)
    elif slope < 0:
        lo, hi = max(lo, (g_true.vg - icpt) / slope), min(hi, (-g_true.vg - icpt) / slope)
    elif abs(icpt) > g_true.vg:
        raise RootNotBracketed("closed-loop iq law lies outside the stability region")
    if lo > hi:
        raise RootNotBracketed(f"empty admissible id range [{lo!r}, {hi!r}]")

    def power_error(i_d):
        try:
            return active_power(g_true, c, CurrentSetpoint(i_d, a * i_d + b)) - lim.p_max
        except InfeasibleSetpoint:
            return math.nan

    i_d = bisect(power_error, lo, hi, xtol=1e-15)
    return CurrentSetpoint(i_d, a * i_d + b)


def s3_closed_loop_trial(
    g_true: GridModel,
    g_est: GridModel,
    c: PowerConvention,
    lim: InverterLimits,
    law: ClosedLoopLaw = ClosedLoopLaw.POWER,
) -> float:
    _require_s3(g_true, c, lim)
    return pcc_voltage(g_true, closed_loop_setpoint(g_true, g_est, c, lim, law))


# ---------------------------------------------------------------------------
# S3: Monte Carlo

def case_rng(seed: int, case_index: int) -> np.random.Generator:
    """Counter-based stream per case so cases can run in any order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, case_index])))


def _summarise(mode, v_star, v, keep, trials, discarded, misdecided, seed, vg, scr, r_over_x):
    if keep.any():
        vk = v[keep]
        gaps = 100.0 * (v_star - vk) / v_star
        worst = float(vk.min())
        gap_pct, mean_pct = float(gaps.max()), float(gaps.mean())
    else:
        worst, gap_pct, mean_pct = math.nan, math.nan, math.nan
    return GapReport(
        v_true_opt=v_star,
        v_achieved_worst=worst,
        gap_abs=v_star - worst,
        gap_pct=gap_pct,
        mode=mode,
        trials=trials,
        discarded_infeasible=discarded,
        seed=seed,
        mean_gap_pct=mean_pct,
        misdecided=misdecided,
        vg=vg,
        scr=scr,
        r_over_x=r_over_x,
    )


def monte_carlo_case(
    g: GridModel,
    band: UncertaintyBand,
    trials: int = 200,
    p_fraction: float = 0.5,
    seed: int = 0,
    case_index: int = 0,
    i_max: float = 1.5,
    c: PowerConvention = PER_UNIT,
    law: ClosedLoopLaw = ClosedLoopLaw.POWER,
) -> tuple[GapReport, GapReport]:
    th = compute_thresholds(g, c, InverterLimits(i_max, 1.0))
    if not _s3_capable(th):
        raise PreconditionViolated("S3 Monte Carlo needs a grid where the S3 stage exists")
    lim = InverterLimits(i_max, p_fraction * th.p_b_prime)
    sol = solve(g, c, lim)
    if sol.stage is not Stage.S3:
        raise PreconditionViolated(f"p_fraction={p_fraction} does not put the case in S3 ({sol.stage.value})")
    v_star = sol.op.v

    alpha, beta = band.sample(case_rng(seed, case_index), trials)
    r_hat = (1.0 + alpha) * g.r
    x_hat = (1.0 + beta) * g.x
    misdecided = np.array([
        decide_stage(compute_thresholds(GridModel(g.vg, rh, xh), c, lim), lim) is not Stage.S3
        for rh, xh in zip(r_hat, x_hat)
    ], dtype=bool)

    v_open, p_open, i_open, v_closed, _, _, ok_closed = _kernels.s3_trials(
        g.vg, g.r, g.x, c.k, lim.i_max, lim.p_max, r_hat, x_hat, law.kernel_code
    )
    ok_open = np.isfinite(v_open) & (p_open <= lim.p_max + GAP_TOL) & (i_open <= lim.i_max + GAP_TOL)
    vg, scr, rx = g.vg, 1.0 / g.z, g.r / g.x
    open_rep = _summarise(
        GapMode.S3_OPEN_LOOP, v_star, v_open, ok_open & ~misdecided, trials,
        int((~ok_open & ~misdecided).sum()), int(misdecided.sum()), seed, vg, scr, rx,
    )
    closed_rep = _summarise(
        GapMode.S3_CLOSED_LOOP, v_star, v_closed, ok_closed & ~misdecided, trials,
        int((~ok_closed & ~misdecided).sum()), int(misdecided.sum()), seed, vg, scr, rx,
    )
    return open_rep, closed_rep


def s3_cases(
    vgs: Sequence[float] = DEFAULT_VGS,
    scrs: Sequence[float] = DEFAULT_SCRS,
    r_over_x: float = 2.0,
    i_max: float = 1.5,
) -> list[tuple[float, float, GridModel]]:
    """``(vg, scr, grid)`` for each sweep point on which the S3 stage exists."""
    cases = []
    for vg in vgs:
        for scr in scrs:
            g = GridModel.from_scr(vg, scr, r_over_x)
            if _s3_capable(compute_thresholds(g, PER_UNIT, InverterLimits(i_max, 1.0))):
                cases.append((vg, scr, g))
    return cases


def _s3_capable(th) -> bool:
    # p_b_prime <= 0 leaves no positive power for which S3 is active
    return th.c3_holds and th.p_b_prime > 1e-9 * th.p_b


def monte_carlo_s3(
    band: UncertaintyBand,
    trials: int = 200,
    p_fraction: float = 0.5,
    seed: int = 0,
    vgs: Sequence[float] = DEFAULT_VGS,
    scrs: Sequence[float] = DEFAULT_SCRS,
    r_over_x: float = 2.0,
    i_max: float = 1.5,
    c: PowerConvention = PER_UNIT,
    law: ClosedLoopLaw = ClosedLoopLaw.POWER,
) -> list[GapReport]:
    """Open- and closed-loop gap reports for every S3-capable case of the sweep."""
    reports: list[GapReport] = []
    for idx, (vg, scr, g) in enumerate(s3_cases(vgs, scrs, r_over_x, i_max)):
        open_rep, closed_rep = monte_carlo_case(g, band, trials, p_fraction, seed, idx, i_max, c, law)
        reports.extend(_with_case(rep, vg, scr, r_over_x) for rep in (open_rep, closed_rep))
    return reports


def max_gap_pct(reports: Iterable[GapReport], mode: GapMode) -> float:
    vals = [rep.gap_pct for rep in reports if rep.mode is mode and math.isfinite(rep.gap_pct)]
    return max(vals) if vals else math.nan


CSV_COLUMNS = ("vg", "scr", "r_over_x", "mode", "trials", "discarded", "max_gap_pct", "mean_gap_pct", "seed")


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value + 0.0:.9g}"
    return str(value)


def write_gap_csv(reports: Iterable[GapReport], out: TextIO = sys.stdout) -> None:
    w = csv.writer(out, delimiter=",", lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        w.writerow([
            fmt(rep.vg), fmt(rep.scr), fmt(rep.r_over_x), rep.mode.value, rep.trials,
            rep.discarded_infeasible, fmt(rep.gap_pct), fmt(rep.mean_gap_pct),
            "" if rep.seed is None else rep.seed,
        ])
