"""Quasi-static sag events: detection, measurement window, latching, support.

Every timeline step is an algebraic solve of the network equation for the
grid and setpoint active at that instant.  Phase changes are instantaneous:

    PREFAULT   normal operation at unity power factor, MPPT power
    DETECTED   the instant the controller notices the sag
    MEASURING  ``m_cycles`` of zero current; vg is read off the PCC
    SUPPORTING controller steady state on the faulted grid
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Optional, TextIO

import numpy as np

from .droop import german_droop_equilibrium
from .errors import ConfigInvalid, InfeasibleSetpoint, NonConvergence, RootNotBracketed
from .network import (
    ZERO_CURRENT,
    CurrentSetpoint,
    GridModel,
    InverterLimits,
    OperatingPoint,
    PowerConvention,
    operating_point,
    pcc_voltage,
)
from .rootfind import bisect
from .solver import Stage, compute_thresholds, decide_stage, solve, solve_s1, solve_s2, symmetry_angle


class Controller(str, enum.Enum):
    DROOP_GERMAN = "DROOP_GERMAN"
    ODVS_PRIOR = "ODVS_PRIOR"
    GODVS = "GODVS"


class Phase(str, enum.Enum):
    PREFAULT = "PREFAULT"
    DETECTED = "DETECTED"
    MEASURING = "MEASURING"
    SUPPORTING = "SUPPORTING"


@dataclass(frozen=True)
class ScenarioConfig:
    grid_prefault: GridModel
    grid_fault: GridModel
    limits: InverterLimits
    convention: PowerConvention = PowerConvention(1.0)
    controller: Controller = Controller.GODVS
    f_nominal: float = 60.0
    m_cycles: int = 3
    detect_threshold: float = 0.85
    t_sag: float = 2.0
    vg_noise_pct: float = 0.0
    seed: int = 0
    detect_delay_cycles: float = 0.39
    dt: float = 0.005
    t_end: float = 2.2
    # positive-sequence algebra ignores it; kept so configs can document the event
    vg_negative: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not (isinstance(self.m_cycles, int) and self.m_cycles >= 1):
            raise ConfigInvalid(f"m_cycles must be an integer >= 1, got {self.m_cycles!r}")
        if not 0 < self.detect_threshold < 1:
            raise ConfigInvalid(f"detect_threshold must lie in (0, 1), got {self.detect_threshold!r}")
        if not self.f_nominal > 0:
            raise ConfigInvalid("f_nominal must be positive")
        if not self.vg_noise_pct >= 0:
            raise ConfigInvalid("vg_noise_pct must be non-negative")
        if self.detect_delay_cycles < 0:
            raise ConfigInvalid("detect_delay_cycles must be non-negative")
        if not (self.dt > 0 and self.t_sag >= 0 and self.t_end > self.t_sag):
            raise ConfigInvalid("need dt > 0 and 0 <= t_sag < t_end")

    @property
    def t_detect(self) -> float:
        return self.t_sag + self.detect_delay_cycles / self.f_nominal

    @property
    def t_support(self) -> float:
        return self.t_detect + self.m_cycles / self.f_nominal


@dataclass(frozen=True)
class TimelineRecord:
    t: float
    phase: Phase
    setpoint: CurrentSetpoint
    op: Optional[OperatingPoint]  # None when no real PCC voltage exists
    stage: Optional[str]
    sync_lost: bool


@dataclass(frozen=True)
class ScenarioSummary:
    controller: str
    detected: bool
    t_detect: Optional[float]
    t_support: Optional[float]
    vg_estimate: Optional[float]
    p_latched: float
    final_v: Optional[float]
    final_setpoint: CurrentSetpoint
    stage: Optional[str]
    sync_lost: bool
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config I/O

_GRID_KEYS = {"vg", "r", "x"}
_LIMIT_KEYS = {"i_max", "p_max", "p_min"}


def _strict(obj: Any, allowed: set[str], what: str, required: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigInvalid(f"{what} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in {what}: {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigInvalid(f"missing key(s) in {what}: {sorted(missing)}")
    return obj


def config_from_dict(d: dict) -> ScenarioConfig:
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    _strict(d, names, "scenario config", {"grid_prefault", "grid_fault", "limits"})
    kw = dict(d)
    try:
        for key in ("grid_prefault", "grid_fault"):
            kw[key] = GridModel(**_strict(d[key], _GRID_KEYS, key, _GRID_KEYS))
        kw["limits"] = InverterLimits(**_strict(d["limits"], _LIMIT_KEYS, "limits", {"i_max", "p_max"}))
        if "convention" in d:
            kw["convention"] = PowerConvention.from_name(d["convention"])
        if "controller" in d:
            kw["controller"] = Controller(d["controller"])
        if d.get("vg_negative") is not None:
            kw["vg_negative"] = tuple(float(v) for v in d["vg_negative"])
        return ScenarioConfig(**kw)
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from None


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# building blocks

def noise_draw(cfg: ScenarioConfig) -> float:
    """Relative estimation error, uniform in ``+-vg_noise_pct`` percent."""
    if cfg.vg_noise_pct == 0:
        return 0.0
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    return float(rng.uniform(-cfg.vg_noise_pct, cfg.vg_noise_pct)) / 100.0


def estimate_grid_voltage(cfg: ScenarioConfig, noise: Optional[float] = None) -> float:
    """PCC voltage read during the zero-current window, with measurement error.

    At zero current the PCC voltage equals the grid voltage, so only the
    noise separates the estimate from ``vg``.  ``noise`` overrides the
    seeded draw (a fraction, e.g. ``-0.0005``).
    """
    v_pcc = pcc_voltage(cfg.grid_fault, ZERO_CURRENT)
    return v_pcc * (1.0 + (noise_draw(cfg) if noise is None else noise))


def prefault_setpoint(cfg: ScenarioConfig) -> CurrentSetpoint:
    """Unity power factor point delivering the available power, capped by the current limit."""
    g, k, lim = cfg.grid_prefault, cfg.convention.k, cfg.limits

    def power(i_d):
        return k * pcc_voltage(g, CurrentSetpoint(i_d, 0.0)) * i_d

    if power(lim.i_max) <= lim.p_max:
        return CurrentSetpoint(lim.i_max, 0.0)
    return CurrentSetpoint(bisect(lambda d: power(d) - lim.p_max, 0.0, lim.i_max, xtol=1e-15), 0.0)


def latch_available_power(cfg: ScenarioConfig) -> float:
    """Prefault PCC power, held as the power ceiling for the fault period."""
    return operating_point(cfg.grid_prefault, cfg.convention, prefault_setpoint(cfg)).p


def _evaluate(g: GridModel, c: PowerConvention, u: CurrentSetpoint) -> Optional[OperatingPoint]:
    try:
        op = operating_point(g, c, u)
    except InfeasibleSetpoint:
        return None
    return op if op.s_margin <= 0 else None


# ---------------------------------------------------------------------------
# controllers; each returns (setpoint, stage label, extra summary fields)

def _godvs(cfg, lim, vg_est):
    sol = solve(cfg.grid_fault.with_voltage(vg_est), cfg.convention, lim)
    return sol.setpoint, sol.stage.value, {}


def _droop(cfg, lim, vg_est):
    try:
        res = german_droop_equilibrium(cfg.grid_fault, lim, c=cfg.convention)
    except NonConvergence as exc:
        if exc.last_iterates is None:
            raise
        # the loop walked past the stability edge; hold the offending setpoint
        return CurrentSetpoint(*exc.last_iterates), None, {"converged": False}
    return res.setpoint, None, {"converged": True, "iterations": res.iterations}


def _odvs_prior(cfg, lim, vg_est):
    """Boundary-only optimiser: S1/S2 as usual, otherwise slide along the current circle."""
    g_est = cfg.grid_fault.with_voltage(vg_est)
    c = cfg.convention
    th = compute_thresholds(g_est, c, lim)
    stage = decide_stage(th, lim)
    if stage is Stage.S1:
        return solve_s1(g_est, lim, c), stage.value, {}
    if stage is Stage.S2:
        return solve_s2(g_est, c, lim)[0], stage.value, {}

    # From the symmetry angle the power falls as the angle turns towards -90 deg.
    # The controller stops at the first angle where P drops to the ceiling.
    # Past the stability edge its model has no root; there the quadrature
    # term is taken as zero, which is what a saturated PLL would report.
    g = g_est
    hi = symmetry_angle(g)

    def model_power(phi):
        u = CurrentSetpoint.polar(lim.i_max, phi)
        s = g.r * u.i_q + g.x * u.i_d
        root = math.sqrt(max(g.vg * g.vg - s * s, 0.0))
        return c.k * (root + g.r * u.i_d - g.x * u.i_q) * u.i_d

    try:
        phi = bisect(lambda a: model_power(a) - lim.p_max, -math.pi / 2, hi, xtol=1e-13)
    except RootNotBracketed:
        phi = -math.pi / 2
    return CurrentSetpoint.polar(lim.i_max, phi), "S3", {"suboptimal_mode": True}


_DISPATCH = {
    Controller.GODVS: _godvs,
    Controller.DROOP_GERMAN: _droop,
    Controller.ODVS_PRIOR: _odvs_prior,
}


# ---------------------------------------------------------------------------
# engine

def _time_grid(cfg: ScenarioConfig, events: list[float]) -> np.ndarray:
    n = int(math.floor(cfg.t_end / cfg.dt + 1e-9))
    ts = np.round(np.arange(n + 1) * cfg.dt, 12)
    ts = np.concatenate([ts, [e for e in events if e <= cfg.t_end], [cfg.t_end]])
    ts = np.unique(ts)
    # merge samples that differ only by rounding from an event instant
    keep = np.concatenate([[True], np.diff(ts) > 1e-12])
    return ts[keep]


def run_scenario(cfg: ScenarioConfig, noise: Optional[float] = None) -> tuple[list[TimelineRecord], ScenarioSummary]:
    c, lim = cfg.convention, cfg.limits
    u_pre = prefault_setpoint(cfg)
    p_latched = latch_available_power(cfg)
    lim_fault = lim.with_pmax(p_latched)

    # the sag is seen only if the prefault current leaves V under the threshold
    op_sag = _evaluate(cfg.grid_fault, c, u_pre)
    detected = op_sag is None or op_sag.v <= cfg.detect_threshold

    if detected:
        t_det, t_sup = cfg.t_detect, cfg.t_support
        vg_est = estimate_grid_voltage(cfg, noise)
        u_sup, stage, extra = _DISPATCH[cfg.controller](cfg, lim_fault, vg_est)
    else:
        t_det = t_sup = vg_est = None
        u_sup, stage, extra = u_pre, None, {}

    events = [cfg.t_sag] + ([t_det, t_sup] if detected else [])
    records: list[TimelineRecord] = []
    for t in _time_grid(cfg, events):
        t = float(t)
        label = None
        if t < cfg.t_sag:
            phase, g, u = Phase.PREFAULT, cfg.grid_prefault, u_pre
        elif not detected or t < t_det:
            phase, g, u = Phase.PREFAULT, cfg.grid_fault, u_pre
        elif math.isclose(t, t_det, abs_tol=1e-12):
            phase, g, u = Phase.DETECTED, cfg.grid_fault, ZERO_CURRENT
        elif t < t_sup and not math.isclose(t, t_sup, abs_tol=1e-12):
            phase, g, u = Phase.MEASURING, cfg.grid_fault, ZERO_CURRENT
        else:
            phase, g, u, label = Phase.SUPPORTING, cfg.grid_fault, u_sup, stage
        op = _evaluate(g, c, u)
        records.append(TimelineRecord(t, phase, u, op, label, op is None))

    last = records[-1]
    summary = ScenarioSummary(
        controller=cfg.controller.value,
        detected=detected,
        t_detect=t_det,
        t_support=t_sup,
        vg_estimate=vg_est,
        p_latched=p_latched,
        final_v=None if last.op is None else last.op.v,
        final_setpoint=last.setpoint,
        stage=stage,
        sync_lost=last.sync_lost,
        extra=extra,
    )
    return records, summary


# ---------------------------------------------------------------------------
# output

TIMELINE_COLUMNS = ("t", "phase", "id", "iq", "v", "p", "q", "i", "s_margin", "stage", "sync_lost")


def _f(value: Optional[float]) -> str:
    return "" if value is None else f"{value + 0.0:.9g}"


def write_timeline_csv(records: list[TimelineRecord], out: TextIO = sys.stdout) -> None:
    w = csv.writer(out, delimiter=",", lineterminator="\n")
    w.writerow(TIMELINE_COLUMNS)
    for rec in records:
        op = rec.op
        w.writerow([
            _f(rec.t), rec.phase.value, _f(rec.setpoint.i_d), _f(rec.setpoint.i_q),
            _f(op and op.v), _f(op and op.p), _f(op and op.q), _f(rec.setpoint.magnitude),
            _f(op and op.s_margin), rec.stage or "", str(rec.sync_lost).lower(),
        ])


def summary_dict(s: ScenarioSummary) -> dict:
    def num(v):
        return None if v is None else float(f"{v + 0.0:.9g}")

    return {
        "controller": s.controller,
        "detected": s.detected,
        "t_detect": num(s.t_detect),
        "t_support": num(s.t_support),
        "vg_estimate": num(s.vg_estimate),
        "p_latched": num(s.p_latched),
        "final_v": num(s.final_v),
        "id": num(s.final_setpoint.i_d),
        "iq": num(s.final_setpoint.i_q),
        "stage": s.stage,
        "sync_lost": s.sync_lost,
        **s.extra,
    }
