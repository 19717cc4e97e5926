"""Globally optimal dynamic voltage support for grid-following inverters.

Quick start::

    from dvsopt import GridModel, InverterLimits, PER_UNIT, solve
    sol = solve(GridModel(0.4, 0.089443, 0.044721), PER_UNIT, InverterLimits(1.5, 0.9656))
    sol.stage, sol.op.v   # (Stage.S1, 0.55...)
"""
from .errors import (
    AssumptionViolated,
    ConfigInvalid,
    DVSError,
    InfeasibleSetpoint,
    NonConvergence,
    NondifferentiablePoint,
    PreconditionViolated,
    RootNotBracketed,
)
from .network import (
    PER_UNIT,
    SI,
    CurrentSetpoint,
    GridModel,
    InverterLimits,
    OperatingPoint,
    PowerConvention,
    active_power,
    grad_v,
    operating_point,
    pcc_voltage,
    stability_margin,
)
from .solver import Stage, StageSolution, StageThresholds, compute_thresholds, decide_stage, solve

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolated", "ConfigInvalid", "DVSError", "InfeasibleSetpoint", "NonConvergence",
    "NondifferentiablePoint", "PreconditionViolated", "RootNotBracketed",
    "PER_UNIT", "SI", "CurrentSetpoint", "GridModel", "InverterLimits", "OperatingPoint",
    "PowerConvention", "active_power", "grad_v", "operating_point", "pcc_voltage", "stability_margin",
    "Stage", "StageSolution", "StageThresholds", "compute_thresholds", "decide_stage", "solve",
]
