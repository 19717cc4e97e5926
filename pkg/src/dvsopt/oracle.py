"""Brute-force certification of the analytical optimum."""
from __future__ import annotations

from dataclasses import dataclass

from ._kernels import lattice_search
from .network import CurrentSetpoint, GridModel, InverterLimits, PowerConvention, active_power


@dataclass(frozen=True)
class OracleResult:
    best_setpoint: CurrentSetpoint
    best_v: float
    grid_step: float
    evaluated: int
    feasible: int


def grid_search(g: GridModel, c: PowerConvention, lim: InverterLimits, delta: float) -> OracleResult:
    """Exhaustive search over the lattice ``{j*delta}^2`` clipped to the current disc.

    Ties go to the smallest ``id``, then the smallest ``iq``, so the result is
    deterministic and independent of the numba/numpy path.
    """
    if not 0 < delta <= 0.05:
        raise ValueError(f"lattice step must be in (0, 0.05], got {delta!r}")
    d, q, v, evaluated, feasible = lattice_search(
        float(g.vg), float(g.r), float(g.x), float(c.k),
        float(lim.i_max), float(lim.p_max), float(lim.p_min), float(delta),
    )
    return OracleResult(
        best_setpoint=CurrentSetpoint(float(d), float(q)),
        best_v=float(v),
        grid_step=delta,
        evaluated=int(evaluated),
        feasible=int(feasible),
    )


def s2_substitution_check(
    g: GridModel, c: PowerConvention, lim: InverterLimits, u: CurrentSetpoint
) -> tuple[float, float]:
    """Residuals ``(I - i_max, P - p_max)``; both ~0 certify a full-current, full-power point."""
    return u.magnitude - lim.i_max, active_power(g, c, u) - lim.p_max
