"""Command line front end: ``dvsopt {solve,droop,oracle,robustness,scenario}``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager

from .droop import DroopRule, find_equilibrium
from .errors import DVSError
from .network import GridModel, InverterLimits, PowerConvention
from .oracle import grid_search
from .robustness import (
    ClosedLoopLaw,
    UncertaintyBand,
    monte_carlo_s3,
    s1_gap_sweep,
    write_gap_csv,
)
from .scenario import load_config, run_scenario, summary_dict, write_timeline_csv
from .solver import solve


def _num(v):
    if v is None:
        return None
    if isinstance(v, bool):
        return v
    v = float(v)
    return float(f"{v + 0.0:.9g}") if math.isfinite(v) else None


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _grid_args(p: argparse.ArgumentParser, power: bool = True) -> None:
    p.add_argument("--vg", type=float, required=True, help="grid voltage magnitude (pu)")
    p.add_argument("--r", type=float, required=True, help="grid resistance (pu)")
    p.add_argument("--x", type=float, required=True, help="grid reactance (pu)")
    p.add_argument("--imax", type=float, required=True, help="inverter current limit")
    if power:
        p.add_argument("--pmax", type=float, required=True, help="available active power")
        p.add_argument("--pmin", type=float, default=0.0)
        p.add_argument("--convention", choices=("pu", "si"), default="pu")


def _problem(a):
    return GridModel(a.vg, a.r, a.x), PowerConvention.from_name(a.convention), InverterLimits(a.imax, a.pmax, a.pmin)


def cmd_solve(a) -> int:
    g, c, lim = _problem(a)
    sol = solve(g, c, lim)
    th, op = sol.thresholds, sol.op
    _dump({
        "stage": sol.stage.value,
        "id": _num(sol.setpoint.i_d),
        "iq": _num(sol.setpoint.i_q),
        "v": _num(op.v),
        "p": _num(op.p),
        "q": _num(op.q),
        "i": _num(op.i),
        "theta": _num(op.theta),
        "s_margin": _num(op.s_margin),
        "p_b": _num(th.p_b),
        "i_b": _num(th.i_b),
        "p_b_prime": _num(th.p_b_prime),
        "c1": th.c1(lim),
        "c2": th.c2(lim),
        "c3": th.c3_holds,
    })
    return 0


def cmd_droop(a) -> int:
    g = GridModel(a.vg, a.r, a.x)
    rep = find_equilibrium(g, DroopRule(a.epsilon, a.vn, a.imax))
    _dump({
        "i_q_star": _num(rep.i_q_star),
        "v_star": _num(rep.v_star),
        "residual": _num(rep.residual),
        "iterations": rep.iterations,
        "classification": rep.classification.value,
        "c4_holds": rep.c4_holds,
        "grad_v": _num(rep.grad_v),
        "eta": _num(rep.eta),
    })
    return 0


def cmd_oracle(a) -> int:
    g, c, lim = _problem(a)
    res = grid_search(g, c, lim, a.delta)
    _dump({
        "id": _num(res.best_setpoint.i_d),
        "iq": _num(res.best_setpoint.i_q),
        "best_v": _num(res.best_v),
        "grid_step": _num(res.grid_step),
        "evaluated": res.evaluated,
        "feasible": res.feasible,
    })
    return 0


def cmd_robustness(a) -> int:
    band = UncertaintyBand.symmetric(a.alpha, a.beta)
    if a.mode == "s1":
        reports = s1_gap_sweep(band, r_over_x=a.r_over_x, i_max=a.imax)
    else:
        reports = monte_carlo_s3(
            band, trials=a.trials, p_fraction=a.pfrac, seed=a.seed,
            r_over_x=a.r_over_x, i_max=a.imax, law=ClosedLoopLaw(a.law),
        )
    with _output(a.out) as fh:
        write_gap_csv(reports, fh)
    return 0


def cmd_scenario(a) -> int:
    records, summary = run_scenario(load_config(a.config))
    if a.out is not None:
        with _output(a.out) as fh:
            write_timeline_csv(records, fh)
    _dump(summary_dict(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvsopt", description="Optimal dynamic voltage support for inverters.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="globally optimal current setpoint")
    _grid_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("droop", help="linear droop equilibrium and its classification")
    _grid_args(p, power=False)
    p.add_argument("--epsilon", type=float, required=True, help="droop gain")
    p.add_argument("--vn", type=float, default=1.0, help="nominal voltage")
    p.set_defaults(func=cmd_droop)

    p = sub.add_parser("oracle", help="brute-force lattice search")
    _grid_args(p)
    p.add_argument("--delta", type=float, default=0.005, help="lattice step, at most 0.05")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("robustness", help="optimality gap under impedance error (CSV)")
    p.add_argument("--mode", choices=("s1", "s3"), required=True)
    p.add_argument("--alpha", type=float, default=0.1, help="relative r error band")
    p.add_argument("--beta", type=float, default=0.1, help="relative x error band")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--pfrac", type=float, default=0.5, help="power as a fraction of the S3 threshold")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--r-over-x", dest="r_over_x", type=float, default=2.0)
    p.add_argument("--imax", type=float, default=1.5)
    p.add_argument("--law", choices=[law.value for law in ClosedLoopLaw], default=ClosedLoopLaw.POWER.value,
                   help="closed-loop reactive current law")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("scenario", help="quasi-static sag event")
    p.add_argument("--config", required=True, help="JSON scenario config")
    p.add_argument("--out", help="timeline CSV path")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DVSError, OSError) as exc:
        print(f"dvsopt {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
