"""Globally optimal dynamic voltage support.

Maximise the PCC voltage over the current disc, the active-power band and
the stability strip.  The optimum has three stages:

* S1 -- enough power: full current on the symmetry line ``r*iq + x*id = 0``;
* S2 -- full current and full power, located by bisection on the current angle;
* S3 -- full power strictly inside the disc, on the line ``dV/diq = 0``.

All power formulas carry the convention factor ``k`` from ``P = k*V*id``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .errors import PreconditionViolated, RootNotBracketed
from .network import (
    PER_UNIT,
    CurrentSetpoint,
    GridModel,
    InverterLimits,
    OperatingPoint,
    PowerConvention,
    operating_point,
    pcc_voltage,
)
from .rootfind import bisect

ENVELOPE_TOL = 1e-9
ANGLE_XTOL = 1e-12


class Stage(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"


@dataclass(frozen=True)
class StageThresholds:
    p_b: float
    i_b: float
    p_b_prime: Optional[float]
    c3_holds: bool

    def c1(self, lim: InverterLimits) -> bool:
        return lim.p_max >= self.p_b

    def c2(self, lim: InverterLimits) -> bool:
        return lim.i_max >= self.i_b


@dataclass(frozen=True)
class StageSolution:
    stage: Stage
    setpoint: CurrentSetpoint
    op: OperatingPoint
    thresholds: StageThresholds
    phi_star: Optional[float] = None  # degrees, S2 only


def _nu(g: GridModel, c: PowerConvention, p_max: float) -> float:
    return math.sqrt(g.vg * g.vg + 4.0 * g.r * p_max / c.k)


def compute_thresholds(g: GridModel, c: PowerConvention, lim: InverterLimits) -> StageThresholds:
    r, x, z, vg, imax = g.r, g.x, g.z, g.vg, lim.i_max
    p_b = c.k * ((r / z) * vg * imax + r * imax * imax)
    nu = _nu(g, c, lim.p_max)
    i_b = math.sqrt(
        vg * vg / (2 * r * r)
        + lim.p_max / (c.k * r)
        + (x * x - r * r) / (2 * r * r * z * z) * vg * nu
    )
    c3 = (x / r) * (vg / z) < imax
    p_b_prime = None
    if c3:
        # distance of the dV/diq = 0 line from the origin is x*vg/z**2
        chord = math.sqrt(imax * imax - (x * vg / (z * z)) ** 2)
        p_b_prime = c.k / (4 * r) * (((r * r - x * x) / (z * z) * vg + 2 * r * chord) ** 2 - vg * vg)
    return StageThresholds(p_b=p_b, i_b=i_b, p_b_prime=p_b_prime, c3_holds=c3)


def decide_stage(th: StageThresholds, lim: InverterLimits) -> Stage:
    # C1 and C2 are mutually exclusive in exact arithmetic; C1 wins a rounding tie.
    if th.c1(lim):
        return Stage.S1
    if th.c2(lim):
        return Stage.S3
    return Stage.S2


def symmetry_angle(g: GridModel) -> float:
    """Current angle (rad) of the S1 point, on ``r*iq + x*id = 0``."""
    return math.atan2(-g.x / g.z, g.r / g.z)


def s3_line_angle(g: GridModel, i_max: float) -> Optional[float]:
    """Angle (rad) where ``dV/diq = 0`` meets the current circle in the fourth quadrant."""
    ratio = g.x * g.vg / (i_max * g.z * g.z)
    if ratio >= g.r / g.z:
        return None
    return -math.asin(ratio) - math.atan2(g.x, g.r)


def solve_s1(g: GridModel, lim: InverterLimits, c: PowerConvention = PER_UNIT) -> CurrentSetpoint:
    th = compute_thresholds(g, c, lim)
    if not th.c1(lim):
        raise PreconditionViolated(f"S1 needs p_max >= p_b ({lim.p_max!r} < {th.p_b!r})")
    return CurrentSetpoint(g.r / g.z * lim.i_max, -g.x / g.z * lim.i_max)


def _power_on_circle(g: GridModel, c: PowerConvention, i_max: float, phi: float) -> float:
    u = CurrentSetpoint.polar(i_max, phi)
    return c.k * pcc_voltage(g, u) * u.i_d


def solve_s2(g: GridModel, c: PowerConvention, lim: InverterLimits) -> tuple[CurrentSetpoint, float]:
    """Full-current, full-power point; returns the setpoint and its angle in degrees."""
    th = compute_thresholds(g, c, lim)
    if th.c1(lim) or th.c2(lim):
        raise PreconditionViolated("S2 needs neither C1 nor C2 to hold")
    hi = symmetry_angle(g)
    lo = s3_line_angle(g, lim.i_max) if th.c3_holds else None
    if lo is None:
        lo = -math.pi / 2
    try:
        phi = bisect(lambda a: _power_on_circle(g, c, lim.i_max, a) - lim.p_max, lo, hi, xtol=ANGLE_XTOL)
    except RootNotBracketed as exc:
        raise RootNotBracketed(f"S2 angle not bracketed on [{math.degrees(lo):.6f}, {math.degrees(hi):.6f}] deg: {exc}") from None
    return CurrentSetpoint.polar(lim.i_max, phi), math.degrees(phi)


def solve_s3(g: GridModel, c: PowerConvention, lim: InverterLimits) -> CurrentSetpoint:
    th = compute_thresholds(g, c, lim)
    if not th.c2(lim):
        raise PreconditionViolated(f"S3 needs i_max >= i_b ({lim.i_max!r} < {th.i_b!r})")
    return s3_setpoint(g, c, lim.p_max)


def s3_setpoint(g: GridModel, c: PowerConvention, p_max: float) -> CurrentSetpoint:
    """Closed-form S3 point for a given power, without the stage check."""
    nu = _nu(g, c, p_max)
    return CurrentSetpoint((nu - g.vg) / (2 * g.z), -(g.x / (2 * g.r * g.z)) * (g.vg + nu))


def check_envelope(op: OperatingPoint, lim: InverterLimits, tol: float = ENVELOPE_TOL) -> None:
    problems = []
    if op.s_margin > tol:
        problems.append(f"stability margin {op.s_margin!r} > 0")
    if op.v < -tol:
        problems.append(f"voltage {op.v!r} < 0")
    if op.i > lim.i_max + tol:
        problems.append(f"current {op.i!r} > {lim.i_max!r}")
    if op.p > lim.p_max + tol:
        problems.append(f"power {op.p!r} > {lim.p_max!r}")
    if op.p < lim.p_min - tol:
        problems.append(f"power {op.p!r} < {lim.p_min!r}")
    if problems:
        raise AssertionError("optimum violates the feasibility envelope: " + "; ".join(problems))


def solve(g: GridModel, c: PowerConvention, lim: InverterLimits) -> StageSolution:
    th = compute_thresholds(g, c, lim)
    stage = decide_stage(th, lim)
    phi = None
    if stage is Stage.S1:
        u = solve_s1(g, lim, c)
    elif stage is Stage.S3:
        u = solve_s3(g, c, lim)
    else:
        u, phi = solve_s2(g, c, lim)
    op = operating_point(g, c, u)
    check_envelope(op, lim)
    return StageSolution(stage=stage, setpoint=u, op=op, thresholds=th, phi_star=phi)
