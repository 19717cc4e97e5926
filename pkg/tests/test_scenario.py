import dataclasses
import io
import json
import math

import numpy as np
import pytest

from dvsopt import PER_UNIT, ConfigInvalid, GridModel, InverterLimits, solve
from dvsopt.scenario import (
    Controller,
    Phase,
    ScenarioConfig,
    config_from_dict,
    estimate_grid_voltage,
    latch_available_power,
    load_config,
    run_scenario,
    write_timeline_csv,
)

R, X = 0.089443, 0.044721


def cfg(vg, p, controller=Controller.GODVS, **kw):
    return ScenarioConfig(
        grid_prefault=GridModel(1.0, R, X),
        grid_fault=GridModel(vg, R, X),
        limits=InverterLimits(1.5, p),
        controller=controller,
        **kw,
    )


def test_latch_and_estimate():
    c = cfg(0.4, 0.9656)
    assert latch_available_power(c) == pytest.approx(0.9656, abs=1e-12)
    assert estimate_grid_voltage(c) == 0.4
    assert estimate_grid_voltage(c, noise=-0.0005) == pytest.approx(0.3998)
    assert estimate_grid_voltage(cfg(0.08, 0.0924), noise=0.0075) == pytest.approx(0.0806)
    noisy = dataclasses.replace(c, vg_noise_pct=1.0, seed=3)
    assert abs(estimate_grid_voltage(noisy) / 0.4 - 1) <= 0.01
    assert estimate_grid_voltage(noisy) == estimate_grid_voltage(noisy)


def test_timeline_phases():
    c = cfg(0.4, 0.9656)
    recs, summary = run_scenario(c)
    ts = [r.t for r in recs]
    assert ts == sorted(ts) and len(set(ts)) == len(ts)
    phases = [r.phase for r in recs]
    order = [Phase.PREFAULT, Phase.DETECTED, Phase.MEASURING, Phase.SUPPORTING]
    seen = [p for i, p in enumerate(phases) if i == 0 or phases[i - 1] is not p]
    assert seen == order
    assert phases.count(Phase.DETECTED) == 1
    assert summary.t_support - summary.t_detect == pytest.approx(3 / 60, abs=1e-12)
    assert summary.t_detect == pytest.approx(2.0065)
    first_support = next(r for r in recs if r.phase is Phase.SUPPORTING)
    assert first_support.t == pytest.approx(summary.t_support, abs=1e-12)
    for r in recs:
        if r.phase in (Phase.DETECTED, Phase.MEASURING):
            assert r.setpoint.magnitude == 0 and r.op.v == pytest.approx(0.4)
        assert r.sync_lost == (r.op is None)


@pytest.mark.parametrize("vg,p", [(0.4, 0.9656), (0.4, 0.3816), (0.08, 0.0924), (0.25, 0.2)])
def test_zero_noise_matches_solve(vg, p):
    _, summary = run_scenario(cfg(vg, p))
    sol = solve(GridModel(vg, R, X), PER_UNIT, InverterLimits(1.5, latch_available_power(cfg(vg, p))))
    assert summary.final_v == pytest.approx(sol.op.v, abs=1e-10)
    assert summary.stage == sol.stage.value


def test_case_outcomes():
    _, s = run_scenario(cfg(0.4, 0.9656, Controller.DROOP_GERMAN))
    assert s.final_v == pytest.approx(0.4439, abs=1e-3)
    _, s = run_scenario(cfg(0.08, 0.0924, Controller.ODVS_PRIOR))
    assert s.sync_lost
    _, s = run_scenario(cfg(0.08, 0.0924, Controller.GODVS, vg_noise_pct=0.75, seed=42))
    assert not s.sync_lost
    assert s.final_v == pytest.approx(0.1557, abs=2e-3)


def test_godvs_never_loses_sync_under_noise():
    rng = np.random.default_rng(0)
    for seed in range(60):
        vg = rng.uniform(0.05, 0.8)
        p = rng.uniform(0.02, 1.2)
        _, s = run_scenario(cfg(vg, p, vg_noise_pct=1.0, seed=seed))
        assert not s.sync_lost


def test_light_sag_not_detected():
    _, s = run_scenario(cfg(0.95, 0.5))
    assert not s.detected and s.stage is None


def test_config_round_trip(tmp_path):
    d = {
        "grid_prefault": {"vg": 1.0, "r": R, "x": X},
        "grid_fault": {"vg": 0.4, "r": R, "x": X},
        "limits": {"i_max": 1.5, "p_max": 0.9656},
        "controller": "DROOP_GERMAN",
        "convention": "pu",
        "vg_negative": [0.3, 50.0],
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    c = load_config(str(path))
    assert c.controller is Controller.DROOP_GERMAN and c.vg_negative == (0.3, 50.0)


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"grid_fault": {"vg": 0.4, "r": R, "x": X, "z": 0.1}},
    {"m_cycles": 0},
    {"detect_threshold": 1.2},
    {"controller": "PID"},
    {"limits": {"i_max": -1, "p_max": 0.5}},
])
def test_config_rejected(bad):
    d = {
        "grid_prefault": {"vg": 1.0, "r": R, "x": X},
        "grid_fault": {"vg": 0.4, "r": R, "x": X},
        "limits": {"i_max": 1.5, "p_max": 0.9656},
    }
    d.update(bad)
    with pytest.raises(ConfigInvalid):
        config_from_dict(d)


def test_timeline_csv_format():
    recs, _ = run_scenario(cfg(0.08, 0.0924, Controller.ODVS_PRIOR))
    buf = io.StringIO(newline="")
    write_timeline_csv(recs, buf)
    text = buf.getvalue()
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == "t,phase,id,iq,v,p,q,i,s_margin,stage,sync_lost"
    last = lines[-1].split(",")
    assert last[1] == "SUPPORTING" and last[4] == "" and last[-1] == "true"
