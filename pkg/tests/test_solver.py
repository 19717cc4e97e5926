import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvsopt import (
    PER_UNIT,
    SI,
    CurrentSetpoint,
    GridModel,
    InverterLimits,
    PreconditionViolated,
    Stage,
    compute_thresholds,
    decide_stage,
    grad_v,
    pcc_voltage,
    solve,
)
from dvsopt.oracle import grid_search
from dvsopt.solver import check_envelope, s3_line_angle, solve_s1, solve_s2, solve_s3, symmetry_angle

from conftest import random_problem


def brute_force_circle(g, c, lim, n=200_001):
    """Best feasible voltage on the current circle, by dense angle sampling."""
    phi = np.linspace(-math.pi / 2, math.pi / 2, n)
    i_d, i_q = lim.i_max * np.cos(phi), lim.i_max * np.sin(phi)
    s = g.r * i_q + g.x * i_d
    ok = np.abs(s) <= g.vg
    v = np.sqrt(np.maximum(g.vg**2 - s**2, 0)) + g.r * i_d - g.x * i_q
    ok &= c.k * v * i_d <= lim.p_max
    return v[ok].max()


def test_case_a(case_a):
    g, lim = case_a
    sol = solve(g, PER_UNIT, lim)
    assert sol.stage is Stage.S1
    assert sol.setpoint.i_d == pytest.approx(1.34164, abs=1e-5)
    assert sol.setpoint.i_q == pytest.approx(-0.67081, abs=1e-5)
    assert sol.op.v == pytest.approx(g.vg + g.z * lim.i_max, abs=1e-12)
    # independent check: the S1 voltage is the unconstrained best on the circle
    assert sol.op.v == pytest.approx(brute_force_circle(g, PER_UNIT, lim), abs=1e-9)


def test_case_b(case_b):
    g, lim = case_b
    sol = solve(g, PER_UNIT, lim)
    assert sol.stage is Stage.S2
    assert sol.setpoint.magnitude == pytest.approx(1.5, abs=1e-10)
    assert sol.op.p == pytest.approx(0.3816, abs=1e-10)
    assert sol.phi_star == pytest.approx(-60.4416, abs=1e-3)
    best = brute_force_circle(g, PER_UNIT, lim)
    assert best - 1e-12 <= sol.op.v <= best + 1e-5


def test_case_c(case_c):
    g, lim = case_c
    sol = solve(g, PER_UNIT, lim)
    assert sol.stage is Stage.S3
    assert sol.op.p == pytest.approx(0.0924, abs=1e-12)
    assert sol.setpoint.magnitude < lim.i_max
    # the S3 point sits on the zero-dV/diq line
    assert grad_v(g, sol.setpoint)[1] == pytest.approx(0.0, abs=1e-9)


def test_s3_beats_every_point_at_full_power(case_c):
    """S3 optimum against a fine 1-D scan of the iso-power curve."""
    g, lim = case_c
    v_star = solve(g, PER_UNIT, lim).op.v
    best = -1.0
    for i_q in np.linspace(-lim.i_max, 0.0, 20001):
        # V*id = P is monotone in id on the admissible branch; bisect id
        lo, hi = 0.0, math.sqrt(lim.i_max**2 - i_q**2)

        def p(i_d):
            s = g.r * i_q + g.x * i_d
            if abs(s) > g.vg:
                return math.nan
            return (math.sqrt(g.vg**2 - s * s) + g.r * i_d - g.x * i_q) * i_d

        if not (p(lo) <= lim.p_max):
            continue
        if not (p(hi) >= lim.p_max):
            continue
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if p(mid) < lim.p_max:
                lo = mid
            else:
                hi = mid
        best = max(best, pcc_voltage(g, CurrentSetpoint(lo, i_q)))
    assert v_star >= best - 1e-9
    assert v_star == pytest.approx(best, abs=1e-5)


def test_stage_preconditions(case_a, case_c):
    g, lim = case_a
    with pytest.raises(PreconditionViolated):
        solve_s2(g, PER_UNIT, lim)
    with pytest.raises(PreconditionViolated):
        solve_s3(g, PER_UNIT, lim)
    g, lim = case_c
    with pytest.raises(PreconditionViolated):
        solve_s1(g, lim)


def test_si_convention_scales_power(case_b):
    g, lim = case_b
    pu = solve(g, PER_UNIT, lim)
    si = solve(g, SI, lim.with_pmax(1.5 * lim.p_max))
    assert si.stage is pu.stage
    assert si.op.v == pytest.approx(pu.op.v, abs=1e-10)


def test_s3_line_angle_meets_circle():
    g = GridModel(0.08, 0.089443, 0.044721)
    phi = s3_line_angle(g, 1.5)
    u = CurrentSetpoint.polar(1.5, phi)
    assert grad_v(g, u)[1] == pytest.approx(0.0, abs=1e-10)
    assert math.degrees(symmetry_angle(g)) == pytest.approx(-26.565, abs=1e-3)


def test_check_envelope_flags_violation(case_a):
    g, lim = case_a
    op = solve(g, PER_UNIT, lim).op
    with pytest.raises(AssertionError):
        check_envelope(op, lim.with_pmax(0.5))


def test_c1_c2_exclusive_and_outputs_feasible():
    rng = np.random.default_rng(11)
    counts = {s: 0 for s in Stage}
    for _ in range(1000):
        g, lim = random_problem(rng)
        th = compute_thresholds(g, PER_UNIT, lim)
        assert not (th.c1(lim) and th.c2(lim))
        sol = solve(g, PER_UNIT, lim)  # runs check_envelope
        counts[sol.stage] += 1
        assert sol.op.s_margin <= 1e-9
        assert sol.op.i <= lim.i_max + 1e-9
        assert -1e-9 <= sol.op.p <= lim.p_max + 1e-9
    assert all(n > 50 for n in counts.values()), counts


def test_agrees_with_oracle_on_random_problems():
    rng = np.random.default_rng(3)
    delta = 0.01
    for _ in range(40):
        g, lim = random_problem(rng)
        v = solve(g, PER_UNIT, lim).op.v
        o = grid_search(g, PER_UNIT, lim, delta)
        assert v >= o.best_v - 1e-12
        assert v <= o.best_v + 5 * delta


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(2, 10), st.floats(0.3, 4), st.floats(0.05, 1.4))
def test_voltage_monotone_in_power(vg, scr, rx, frac):
    """More available power never lowers the optimum."""
    g = GridModel.from_scr(vg, scr, rx)
    p_b = compute_thresholds(g, PER_UNIT, InverterLimits(1.5, 1.0)).p_b
    v1 = solve(g, PER_UNIT, InverterLimits(1.5, frac * p_b)).op.v
    v2 = solve(g, PER_UNIT, InverterLimits(1.5, frac * p_b * 1.05)).op.v
    assert v2 >= v1 - 1e-10


def test_continuity_at_stage_boundaries():
    rng = np.random.default_rng(5)
    done = 0
    while done < 30:
        g, lim = random_problem(rng)
        th = compute_thresholds(g, PER_UNIT, lim)
        bounds = [th.p_b]
        if th.c3_holds and th.p_b_prime > 1e-6:
            bounds.append(th.p_b_prime)
        for pb in bounds:
            lo = solve(g, PER_UNIT, lim.with_pmax(pb - 1e-6))
            hi = solve(g, PER_UNIT, lim.with_pmax(pb + 1e-6))
            assert lo.stage is not hi.stage
            assert abs(lo.op.v - hi.op.v) <= 1e-4
            assert math.dist((lo.setpoint.i_d, lo.setpoint.i_q), (hi.setpoint.i_d, hi.setpoint.i_q)) <= 1e-3
        done += 1
