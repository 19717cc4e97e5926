"""Positive-sequence phasor model of an inverter behind a Thevenin grid.

The inverter is a controlled current source ``id + j*iq`` expressed in a dq
frame aligned with the PCC voltage.  The grid is ``vg`` behind ``r + jx``.
All functions here are pure; dataclasses are frozen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InfeasibleSetpoint, NondifferentiablePoint

SQRT_CLAMP = 1e-12
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class GridModel:
    vg: float
    r: float
    x: float
    z: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.vg > 0 and self.r > 0 and self.x > 0):
            raise ValueError(f"grid needs vg, r, x > 0, got {self.vg}, {self.r}, {self.x}")
        object.__setattr__(self, "z", math.hypot(self.r, self.x))

    @classmethod
    def from_scr(cls, vg: float, scr: float, r_over_x: float) -> "GridModel":
        """Build a grid from short-circuit ratio ``1/z`` and the r/x ratio."""
        z = 1.0 / scr
        x = z / math.sqrt(1.0 + r_over_x**2)
        return cls(vg, r_over_x * x, x)

    def with_voltage(self, vg: float) -> "GridModel":
        return GridModel(vg, self.r, self.x)

    def perturbed(self, alpha: float, beta: float) -> "GridModel":
        """Impedance estimate with relative errors ``alpha`` on r, ``beta`` on x."""
        return GridModel(self.vg, (1.0 + alpha) * self.r, (1.0 + beta) * self.x)


@dataclass(frozen=True)
class PowerConvention:
    """``P = k * V * id``.  k=1 for per-unit, k=1.5 for SI peak phasors."""

    k: float = 1.0

    def __post_init__(self):
        if self.k not in (1.0, 1.5):
            raise ValueError(f"power convention factor must be 1.0 or 1.5, got {self.k}")

    @classmethod
    def from_name(cls, name: str) -> "PowerConvention":
        try:
            return cls({"pu": 1.0, "si": 1.5}[name])
        except KeyError:
            raise ValueError(f"unknown power convention {name!r} (expected 'pu' or 'si')") from None


PER_UNIT = PowerConvention(1.0)
SI = PowerConvention(1.5)


@dataclass(frozen=True)
class InverterLimits:
    i_max: float
    p_max: float
    p_min: float = 0.0

    def __post_init__(self):
        if not self.i_max > 0:
            raise ValueError(f"i_max must be positive, got {self.i_max}")
        if not self.p_max > 0:
            raise ValueError(f"p_max must be positive, got {self.p_max}")
        if self.p_min > 0:
            raise ValueError(f"p_min must be <= 0, got {self.p_min}")

    def with_pmax(self, p_max: float) -> "InverterLimits":
        return InverterLimits(self.i_max, p_max, self.p_min)


@dataclass(frozen=True)
class CurrentSetpoint:
    i_d: float
    i_q: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.i_d, self.i_q)

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.i_q, self.i_d))

    @classmethod
    def polar(cls, magnitude: float, angle_rad: float) -> "CurrentSetpoint":
        return cls(magnitude * math.cos(angle_rad), magnitude * math.sin(angle_rad))


ZERO_CURRENT = CurrentSetpoint(0.0, 0.0)


@dataclass(frozen=True)
class OperatingPoint:
    v: float
    p: float
    q: float
    i: float
    theta: float  # degrees
    s_margin: float


def _coupling(g: GridModel, i_d: float, i_q: float) -> float:
    return g.r * i_q + g.x * i_d


def _root_term(g: GridModel, s: float) -> float:
    arg = g.vg * g.vg - s * s
    if arg < 0.0:
        if arg < -SQRT_CLAMP:
            raise InfeasibleSetpoint(
                f"stability margin {abs(s) - g.vg:.3e} > 0: no real PCC voltage (loss of synchronism)"
            )
        return 0.0
    return math.sqrt(arg)


def stability_margin(g: GridModel, u: CurrentSetpoint) -> float:
    """``|r*iq + x*id| - vg``; non-positive means a real PCC voltage exists."""
    return abs(_coupling(g, u.i_d, u.i_q)) - g.vg


def pcc_voltage(g: GridModel, u: CurrentSetpoint) -> float:
    s = _coupling(g, u.i_d, u.i_q)
    return _root_term(g, s) + g.r * u.i_d - g.x * u.i_q


def operating_point(g: GridModel, c: PowerConvention, u: CurrentSetpoint) -> OperatingPoint:
    s = _coupling(g, u.i_d, u.i_q)
    v = _root_term(g, s) + g.r * u.i_d - g.x * u.i_q
    # Real/imag parts of KVL in the PCC frame give vg*cos(theta) and vg*sin(theta);
    # the cosine part is the non-negative root term, so theta stays in [-90, 90].
    theta = math.degrees(math.atan2(s, v - g.r * u.i_d + g.x * u.i_q))
    return OperatingPoint(
        v=v,
        p=c.k * v * u.i_d,
        q=-c.k * v * u.i_q,
        i=u.magnitude,
        theta=theta,
        s_margin=abs(s) - g.vg,
    )


def active_power(g: GridModel, c: PowerConvention, u: CurrentSetpoint) -> float:
    return c.k * pcc_voltage(g, u) * u.i_d


def grad_v(g: GridModel, u: CurrentSetpoint) -> tuple[float, float]:
    """Closed-form ``(dV/did, dV/diq)``; undefined on the stability boundary."""
    s = _coupling(g, u.i_d, u.i_q)
    margin = abs(s) - g.vg
    if margin > BOUNDARY_TOL:
        raise InfeasibleSetpoint(f"setpoint outside the stability region (margin {margin:.3e})")
    if margin >= -BOUNDARY_TOL:
        raise NondifferentiablePoint("V is not differentiable on the stability boundary")
    root = math.sqrt(g.vg * g.vg - s * s)
    return g.r - g.x * s / root, -g.x - g.r * s / root

