import math

import numpy as np
import pytest

from dvsopt import PER_UNIT, GridModel, InverterLimits, compute_thresholds, solve, Stage
from dvsopt import _kernels
from dvsopt.robustness import (
    ClosedLoopLaw,
    GapMode,
    UncertaintyBand,
    case_rng,
    max_gap_pct,
    monte_carlo_case,
    monte_carlo_s3,
    s1_gap_bound,
    s1_trial,
    s3_cases,
    s3_closed_loop_trial,
    s3_open_loop_trial,
    write_gap_csv,
)


def test_s1_bound_is_worst_over_band(case_a):
    g, lim = case_a
    band = UncertaintyBand.symmetric(0.1)
    rep = s1_gap_bound(g, lim, band)
    worst = min(
        s1_trial(g, g.perturbed(a, b), lim)
        for a in np.linspace(-0.1, 0.1, 81)
        for b in np.linspace(-0.1, 0.1, 81)
    )
    assert rep.v_achieved_worst == pytest.approx(worst, abs=1e-12)
    assert rep.gap_pct == pytest.approx(0.135, abs=0.005)


def test_s1_bound_zero_without_error(case_a):
    g, lim = case_a
    assert s1_gap_bound(g, lim, UncertaintyBand.symmetric(0.0)).gap_abs == pytest.approx(0.0, abs=1e-15)


def _s3_case():
    g = GridModel.from_scr(0.2, 4.0, 2.0)
    th = compute_thresholds(g, PER_UNIT, InverterLimits(1.5, 1.0))
    return g, InverterLimits(1.5, 0.5 * th.p_b_prime)


@pytest.mark.parametrize("law", list(ClosedLoopLaw))
def test_kernel_matches_scalar_path(law):
    g, lim = _s3_case()
    alpha, beta = UncertaintyBand.symmetric(0.1).sample(case_rng(9, 0), 50)
    r_hat, x_hat = (1 + alpha) * g.r, (1 + beta) * g.x
    v_open, p_open, i_open, v_closed, _, _, ok = _kernels.s3_trials(
        g.vg, g.r, g.x, 1.0, lim.i_max, lim.p_max, r_hat, x_hat, law.kernel_code
    )
    for t in range(50):
        est = GridModel(g.vg, r_hat[t], x_hat[t])
        scalar_open = s3_open_loop_trial(g, est, PER_UNIT, lim)
        kernel_ok = np.isfinite(v_open[t]) and p_open[t] <= lim.p_max + 1e-12 and i_open[t] <= lim.i_max + 1e-12
        assert (scalar_open is not None) == kernel_ok
        if scalar_open is not None:
            assert v_open[t] == pytest.approx(scalar_open, abs=1e-14)
        if ok[t]:
            assert v_closed[t] == pytest.approx(s3_closed_loop_trial(g, est, PER_UNIT, lim, law), abs=1e-12)


@pytest.mark.parametrize("law", list(ClosedLoopLaw))
def test_kernel_parity_numba_numpy(law):
    g, lim = _s3_case()
    alpha, beta = UncertaintyBand.symmetric(0.1).sample(case_rng(1, 2), 500)
    args = (g.vg, g.r, g.x, 1.0, lim.i_max, lim.p_max, (1 + alpha) * g.r, (1 + beta) * g.x, law.kernel_code)
    for a, b in zip(_kernels._s3_trials_numba(*args), _kernels._s3_trials_numpy(*args)):
        assert np.array_equal(a, b, equal_nan=True)


def test_closed_loop_tracks_power():
    g, lim = _s3_case()
    est = g.perturbed(0.07, -0.05)
    from dvsopt.robustness import closed_loop_setpoint
    from dvsopt import active_power
    u = closed_loop_setpoint(g, est, PER_UNIT, lim)
    assert active_power(g, PER_UNIT, u) == pytest.approx(lim.p_max, abs=1e-12)


def test_no_error_means_no_gap():
    g, lim = _s3_case()
    v_star = solve(g, PER_UNIT, lim).op.v
    assert s3_open_loop_trial(g, g, PER_UNIT, lim) == pytest.approx(v_star, abs=1e-12)
    assert s3_closed_loop_trial(g, g, PER_UNIT, lim) == pytest.approx(v_star, abs=1e-12)


def test_monte_carlo_deterministic_and_order_free():
    g = _s3_case()[0]
    band = UncertaintyBand.symmetric(0.1)
    a = monte_carlo_case(g, band, trials=100, seed=5, case_index=3)
    b = monte_carlo_case(g, band, trials=100, seed=5, case_index=3)
    assert a == b
    c = monte_carlo_case(g, band, trials=100, seed=6, case_index=3)
    assert a != c


def test_sweep_cases_and_csv(tmp_path):
    cases = s3_cases()
    assert len(cases) == 44
    assert all(isinstance(scr, int) for _, scr, _ in cases)
    reps = monte_carlo_s3(UncertaintyBand.symmetric(0.1), trials=20, seed=0, vgs=(0.1, 0.2), scrs=(2, 3))
    assert {r.mode for r in reps} == {GapMode.S3_OPEN_LOOP, GapMode.S3_CLOSED_LOOP}
    path = tmp_path / "gap.csv"
    with open(path, "w", newline="") as fh:
        write_gap_csv(reps, fh)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "vg,scr,r_over_x,mode,trials,discarded,max_gap_pct,mean_gap_pct,seed"
    assert len(lines) == 1 + len(reps)
    assert max_gap_pct(reps, GapMode.S3_CLOSED_LOOP) >= 0


def test_band_validation():
    with pytest.raises(ValueError):
        UncertaintyBand(0.1, -0.1, 0.0, 0.0)
