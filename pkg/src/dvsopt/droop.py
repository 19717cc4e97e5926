"""Droop-controlled reactive current support and its optimisation reading.

With ``id = 0`` the PCC voltage is a strictly concave function of ``iq``
alone.  A droop rule ``iq <- clamp(eps*(V - Vn))`` iterated against the
network settles on a fixed point; the helpers here locate that fixed point,
classify it against the reverse-engineered cost

    F(iq) = eta/2 * (V(iq) - Vn)**2 + iq**2 / (2*eps),   eta = -1/V'(iq*)

and report the gains at which droop coincides with the voltage optimum.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolated, InfeasibleSetpoint, NonConvergence
from .network import PER_UNIT, CurrentSetpoint, GridModel, InverterLimits, PowerConvention, pcc_voltage

DAMPING = 0.5
MAX_ITER = 10_000
FP_TOL = 1e-12
GRAD_ZERO_TOL = 1e-6
HESS_ZERO_TOL = 1e-10
DEDUP_TOL = 1e-8


class Classification(str, enum.Enum):
    UNIQUE_RE_OPTIMUM = "UNIQUE_RE_OPTIMUM"
    LOCAL_MIN_RE = "LOCAL_MIN_RE"
    LOCAL_MAX_RE = "LOCAL_MAX_RE"
    VOLTAGE_OPTIMAL = "VOLTAGE_OPTIMAL"
    SATURATED = "SATURATED"
    INDETERMINATE = "INDETERMINATE"


@dataclass(frozen=True)
class DroopRule:
    epsilon: float
    v_n: float = 1.0
    i_max: float = 1.5

    def __post_init__(self):
        if not (self.epsilon > 0 and self.v_n > 0 and self.i_max > 0):
            raise ValueError("droop rule needs epsilon, v_n, i_max > 0")


@dataclass(frozen=True)
class GermanDroopRule:
    """Grid-code curve: zero above ``v_dead``, full ``-i_max`` at or below ``v_sat``."""

    i_max: float = 1.5
    v_dead: float = 0.9
    v_sat: float = 0.5

    def target(self, v: float) -> float:
        if v <= self.v_sat:
            return -self.i_max
        if v >= self.v_dead:
            return 0.0
        return self.i_max / (self.v_dead - self.v_sat) * (v - self.v_dead)


@dataclass(frozen=True)
class EquilibriumReport:
    i_q_star: float
    v_star: float
    residual: float
    iterations: int
    classification: Classification
    c4_holds: bool
    grad_v: float
    eta: float | None


def droop_target(rule: DroopRule, v: float) -> float:
    return min(rule.i_max, max(-rule.i_max, rule.epsilon * (v - rule.v_n)))


def droop_voltage(g: GridModel, i_q: float) -> float:
    return pcc_voltage(g, CurrentSetpoint(0.0, i_q))


def droop_grad(g: GridModel, i_q: float) -> float:
    root = math.sqrt(g.vg * g.vg - (g.r * i_q) ** 2)
    return -g.r * g.r * i_q / root - g.x


def droop_hess(g: GridModel, i_q: float) -> float:
    arg = g.vg * g.vg - (g.r * i_q) ** 2
    return -g.r * g.r * g.vg * g.vg / arg**1.5


def c4_holds(g: GridModel, i_max: float) -> bool:
    """Whether the current limit binds before V peaks: ``i_max < x*vg/(r*z)``."""
    return i_max < g.x * g.vg / (g.r * g.z)


def _check_a2(g: GridModel, i_max: float) -> None:
    if not i_max < g.vg / g.r:
        raise AssumptionViolated(f"need i_max < vg/r = {g.vg / g.r!r} for a stable droop loop, got {i_max!r}")


def re_eta(g: GridModel, i_q_star: float) -> float:
    return -1.0 / droop_grad(g, i_q_star)


def re_objective(g: GridModel, rule: DroopRule, eta: float, i_q: float) -> float:
    return 0.5 * eta * (droop_voltage(g, i_q) - rule.v_n) ** 2 + i_q * i_q / (2.0 * rule.epsilon)


def re_gradient(g: GridModel, rule: DroopRule, eta: float, i_q: float) -> float:
    return eta * (droop_voltage(g, i_q) - rule.v_n) * droop_grad(g, i_q) + i_q / rule.epsilon


def re_hessian(g: GridModel, rule: DroopRule, eta: float, i_q: float) -> float:
    grad = droop_grad(g, i_q)
    return eta * grad * grad + eta * (droop_voltage(g, i_q) - rule.v_n) * droop_hess(g, i_q) + 1.0 / rule.epsilon


def _classify(g: GridModel, rule: DroopRule, i_q: float) -> tuple[Classification, float, float | None]:
    grad = droop_grad(g, i_q)
    if abs(i_q) >= rule.i_max:
        return Classification.SATURATED, grad, None
    if abs(grad) <= GRAD_ZERO_TOL:
        return Classification.VOLTAGE_OPTIMAL, grad, None
    eta = -1.0 / grad
    if grad < 0:
        return Classification.UNIQUE_RE_OPTIMUM, grad, eta
    hess = re_hessian(g, rule, eta, i_q)
    if abs(hess) < HESS_ZERO_TOL:
        return Classification.INDETERMINATE, grad, eta
    if hess > 0:
        return Classification.LOCAL_MIN_RE, grad, eta
    return Classification.LOCAL_MAX_RE, grad, eta


def find_equilibrium(
    g: GridModel,
    rule: DroopRule,
    i_q0: float = 0.0,
    damping: float = DAMPING,
    tol: float = FP_TOL,
    max_iter: int = MAX_ITER,
) -> EquilibriumReport:
    """Damped fixed-point iteration of the droop loop with ``id = 0``."""
    _check_a2(g, rule.i_max)

    def step(q):
        return droop_target(rule, droop_voltage(g, q))

    q = i_q0
    prev = q
    for it in range(1, max_iter + 1):
        prev, q = q, (1.0 - damping) * q + damping * step(q)
        if abs(q - prev) <= tol:
            break
    else:
        raise NonConvergence(
            f"droop iteration did not settle in {max_iter} steps (last iterates {prev!r}, {q!r})",
            last_iterates=(prev, q),
        )
    # one undamped step snaps a saturated fixed point onto the bound exactly
    q = step(q)
    residual = abs(q - step(q))
    cls, grad, eta = _classify(g, rule, q)
    return EquilibriumReport(
        i_q_star=q,
        v_star=droop_voltage(g, q),
        residual=residual,
        iterations=it,
        classification=cls,
        c4_holds=c4_holds(g, rule.i_max),
        grad_v=grad,
        eta=eta,
    )


def find_equilibria(g: GridModel, rule: DroopRule, n_starts: int = 20, seed: int = 0) -> list[EquilibriumReport]:
    """Multi-start search; distinct fixed points sorted by ``iq``."""
    rng = np.random.default_rng(seed)
    starts = np.concatenate([[0.0, -rule.i_max, rule.i_max], rng.uniform(-rule.i_max, rule.i_max, n_starts)])
    found: list[EquilibriumReport] = []
    for q0 in starts:
        rep = find_equilibrium(g, rule, float(q0))
        if all(abs(rep.i_q_star - f.i_q_star) > DEDUP_TOL for f in found):
            found.append(rep)
    return sorted(found, key=lambda rep: rep.i_q_star)


def droop_gain_threshold(g: GridModel, v_n: float, i_max: float) -> float:
    """Smallest gain whose equilibrium is the saturated, voltage-maximising ``-i_max``."""
    if not c4_holds(g, i_max):
        raise AssumptionViolated("threshold gain only exists when i_max < x*vg/(r*z)")
    _check_a2(g, i_max)
    denom = math.sqrt(g.vg**2 - (g.r * i_max) ** 2) + g.x * i_max - v_n
    if denom >= 0:
        raise AssumptionViolated(f"V(-i_max) = {denom + v_n!r} already reaches v_n; voltage is fully restorable")
    return -i_max / denom


def exact_optimal_gain(g: GridModel, v_n: float, i_max: float | None = None) -> float:
    """The single gain whose interior equilibrium sits at the peak of V."""
    if i_max is not None and c4_holds(g, i_max):
        raise AssumptionViolated("exact optimal gain needs i_max >= x*vg/(r*z)")
    denom = g.r * g.z * v_n - g.z * g.z * g.vg
    if denom <= 0:
        raise AssumptionViolated("need r*z*v_n > z**2*vg (the peak voltage must stay below v_n)")
    return g.x * g.vg / denom


def max_droop_voltage(g: GridModel, i_max: float) -> tuple[float, float]:
    """``(iq, V)`` at the maximum of V over ``|iq| <= i_max`` with ``id = 0``."""
    _check_a2(g, i_max)
    if c4_holds(g, i_max):
        return -i_max, droop_voltage(g, -i_max)
    return -g.x * g.vg / (g.r * g.z), g.z * g.vg / g.r


@dataclass(frozen=True)
class GermanDroopResult:
    setpoint: CurrentSetpoint
    v: float
    iterations: int


def german_droop_equilibrium(
    g: GridModel,
    lim: InverterLimits,
    rule: GermanDroopRule | None = None,
    c: PowerConvention = PER_UNIT,
    damping: float = DAMPING,
    tol: float = FP_TOL,
    max_iter: int = MAX_ITER,
) -> GermanDroopResult:
    """Grid-code droop with reactive priority; leftover current carries active power."""
    rule = rule or GermanDroopRule(i_max=lim.i_max)

    def step(d, q):
        v = pcc_voltage(g, CurrentSetpoint(d, q))
        q_new = rule.target(v)
        head = math.sqrt(max(lim.i_max**2 - q_new * q_new, 0.0))
        d_new = min(head, lim.p_max / (c.k * v)) if v > 0 else 0.0
        return d_new, q_new

    d, q = 0.0, 0.0
    for it in range(1, max_iter + 1):
        try:
            td, tq = step(d, q)
        except InfeasibleSetpoint as exc:
            raise NonConvergence(
                f"droop drove the inverter out of the stability region: {exc}", last_iterates=(d, q)
            ) from None
        nd = (1.0 - damping) * d + damping * td
        nq = (1.0 - damping) * q + damping * tq
        done = max(abs(nd - d), abs(nq - q)) <= tol
        d, q = nd, nq
        if done:
            break
    else:
        raise NonConvergence("German droop iteration did not settle", last_iterates=(d, q))
    d, q = step(d, q)
    u = CurrentSetpoint(d, q)
    return GermanDroopResult(setpoint=u, v=pcc_voltage(g, u), iterations=it)
