"""Command-line entry point: ``blowup-lab <command> ...``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .cutoff import CutoffFamily, check_key_lemma_ode, verify_cutoff_bounds
from .damping import BUILTIN, DampingCalculus, DampingError, check_assumptions, make_spec
from .heat_fujita import compute_h_and_teps, gaussian_data, heat_solve_until_blowup
from .scaled_solver import (
    EnergyReport,
    ScaledGrid,
    compare_frames,
    compute_energies_1d,
    evolve_scaled,
    initial_scaled,
    solve_scaled_until_blowup,
)
from .wave_solver import SolveConfig, read_records, solve_with_growth, write_records, write_snapshot


def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _family_args(p):
    p.add_argument("--family", required=True, help="constant, power, scale_invariant or log_tower")
    p.add_argument("--params", default="", help="k=v, e.g. beta=0.5")


def _solve_args(p):
    _family_args(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--umax", type=float, default=1e6)
    p.add_argument("--tmax", type=float, default=100.0)
    p.add_argument("--csv", default=None, help="append the lifespan record to this CSV")


def _config(args):
    spec = make_spec(args.family, args.params)
    return SolveConfig(p=args.p, eps=args.eps, damping=spec, N=args.N, L=args.L, h=args.h, cfl=args.cfl,
                       U_max=args.umax, T_max=args.tmax)


def _emit_record(rec, path):
    if path:
        write_records(path, [rec], append=True)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rec.row()), lineterminator="\n")
    w.writeheader()
    w.writerow(rec.row())


def cmd_damping_check(args):
    report = check_assumptions(make_spec(args.family, args.params), horizon=args.horizon)
    print("\n".join(report.lines()))


def cmd_damping_eval(args):
    calc = DampingCalculus(make_spec(args.family, args.params))
    fn = {"b": calc.b, "B": calc.eval_B, "Binv": calc.invert_B, "Phi": calc.eval_Phi}
    if args.what == "B0":
        value = calc.eval_B0()
    else:
        if args.t is None:
            raise DampingError(f"--t is required for {args.what}")
        value = fn[args.what](args.t)
    print(repr(float(value)))


def cmd_verify_cutoff(args):
    calc = DampingCalculus(make_spec(args.family, args.params))
    base = CutoffFamily(args.R[0], args.p, calc, args.N)
    print("R,C1,C2,C3")
    for R in args.R:
        c = verify_cutoff_bounds(base.with_R(R), points=args.points, interior=args.interior)
        print(f"{R:.17g},{c.C1:.17g},{c.C2:.17g},{c.C3:.17g}")


def cmd_key_bound(args):
    chk = check_key_lemma_ode(args.delta, args.C0, args.R1, args.theta, args.p)
    print(f"bound          : {chk.bound!r}")
    print(f"ode_radius     : {chk.blowup_radius!r}")
    print(f"verdict        : {'ok' if chk.ok else 'mismatch'}")


def cmd_solve(args):
    cfg = _config(args)
    times = None
    if args.snapshots:
        os.makedirs(args.snapshots, exist_ok=True)
        times = list(np.arange(0.0, cfg.T_max + 1e-12, args.every)) if args.every else None
        if times is None:
            cfg.snapshot_cadence = max(cfg.T_max / 20.0, cfg.h)
    rec, series = solve_with_growth(cfg, snapshot_times=times)
    if args.snapshots:
        for i, snap in enumerate(series.snapshots):
            write_snapshot(os.path.join(args.snapshots, f"snap_{i:05d}.txt"), snap)
    _emit_record(rec, args.csv)


def cmd_scaled_solve(args):
    cfg = _config(args)
    grid = ScaledGrid(args.Y, args.k, cfg.N)
    if args.energies:
        if cfg.N != 1:
            raise SystemExit("energies are available for N = 1 only")
        calc = DampingCalculus(cfg.damping)
        s_end = math.log1p(calc.eval_B(cfg.T_max))
        state = initial_scaled(grid, calc, cfg.eps, cfg.f_profile, cfg.g_profile)
        run = evolve_scaled(state, calc, cfg.p, s_end, ds=args.ds, U_max=cfg.U_max,
                            record_at=list(np.arange(0.0, s_end, args.every)))
        reports = compute_energies_1d(run.states, calc, cfg.p)
        with open(args.energies, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EnergyReport.COLUMNS)
            w.writerows(r.row() for r in reports)
    rec = solve_scaled_until_blowup(cfg, grid=grid, ds=args.ds)
    _emit_record(rec, args.csv)


def cmd_compare_frames(args):
    spec = make_spec(args.family, args.params)
    cmp = compare_frames(args.eps, args.p, spec, N=args.N, s_cmp=args.s)
    print(f"s         : {cmp.s!r}")
    print(f"rel_v     : {cmp.rel_v!r}")
    print(f"rel_w     : {cmp.rel_w!r}")
    print(f"rel_total : {cmp.rel_total!r}")


def cmd_heat_lower_bound(args):
    data = gaussian_data(args.N, args.width)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["eps", "t_eps", "T_heat", "verdict"])
    for eps in args.eps_list:
        lb = compute_h_and_teps(data, eps, args.p)
        T = math.nan
        verdict = "skipped"
        if args.solve and math.isfinite(lb.t_eps):
            spec = make_spec("constant", "c=1")
            cfg = SolveConfig(p=args.p, eps=eps, damping=spec, N=args.N, h=args.h, width=args.width,
                              T_max=max(10.0, 4.0 * lb.t_eps))
            rec = heat_solve_until_blowup(cfg)
            T = rec.T_num
            verdict = "ok" if rec.blew_up and T >= lb.t_eps else ("global" if not rec.blew_up else "violated")
        w.writerow([f"{eps:.17g}", f"{lb.t_eps:.17g}", f"{T:.17g}", verdict])


def cmd_sweep(args):
    plan = ex.read_plan(args.plan)
    if args.out:
        plan.out = args.out
    try:
        records = ex.run_sweep(plan)
    except ex.SweepError as err:
        print(f"error: {err}", file=sys.stderr)
        records = err.records
        status = 1
    else:
        status = 0
    if not plan.out:
        w = csv.DictWriter(sys.stdout, fieldnames=list(records[0].row()) if records else ["eps"],
                           lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow(rec.row())
    return status


def cmd_fit(args):
    records = read_records(args.csv)
    if not records:
        raise SystemExit(f"{args.csv}: no records")
    first = records[0]
    if first.label in BUILTIN:
        family, params = BUILTIN[first.label].family.name, BUILTIN[first.label].params_text
    else:
        family, params = first.label.split("(")[0], first.params
    plan = ex.SweepPlan(family=args.family or family, params=args.params or params,
                        N=first.N, p=first.p, eps_list=sorted({r.eps for r in records}, reverse=True))
    if args.model == "power":
        fit = ex.fit_subcritical(records, plan, variable=args.variable)
    else:
        fit = ex.fit_critical(records, plan)
    if args.out:
        ex.write_fits(args.out, [fit])
    w = csv.DictWriter(sys.stdout, fieldnames=ex.FIT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerow(fit.row())


def build_parser():
    ap = argparse.ArgumentParser(prog="blowup-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    dmp = sub.add_parser("damping", help="damping coefficient tools")
    dsub = dmp.add_subparsers(dest="action", required=True)
    p = dsub.add_parser("check", help="print the assumption report")
    _family_args(p)
    p.add_argument("--horizon", type=float, default=1e4)
    p.set_defaults(func=cmd_damping_check)
    p = dsub.add_parser("eval", help="evaluate b, B, B^-1, Phi or B0")
    _family_args(p)
    p.add_argument("--what", choices=["b", "B", "Binv", "Phi", "B0"], required=True)
    p.add_argument("--t", type=float, default=None)
    p.set_defaults(func=cmd_damping_eval)

    p = sub.add_parser("verify-cutoff", help="measure the cutoff derivative constants")
    _family_args(p)
    p.add_argument("--R", type=_floats, default=[10.0, 100.0, 1000.0])
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--interior", type=int, default=10_000)
    p.set_defaults(func=cmd_verify_cutoff)

    p = sub.add_parser("key-bound", help="closed-form radius bound with an ODE cross-check")
    for name in ("delta", "C0", "R1", "theta", "p"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.set_defaults(func=cmd_key_bound)

    p = sub.add_parser("solve", help="direct-frame blowup run")
    _solve_args(p)
    p.add_argument("--snapshots", default=None, help="directory for (r, u, v) snapshot files")
    p.add_argument("--every", type=float, default=None, help="snapshot spacing in t")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("scaled-solve", help="scaled-frame blowup run")
    _solve_args(p)
    p.add_argument("--ds", type=float, default=2e-3)
    p.add_argument("--Y", type=float, default=16.0, help="half-width of the y grid")
    p.add_argument("--k", type=float, default=0.05, help="y grid spacing")
    p.add_argument("--energies", default=None, help="write the energy series CSV here (N = 1)")
    p.add_argument("--every", type=float, default=0.1, help="energy sampling spacing in s")
    p.set_defaults(func=cmd_scaled_solve)

    p = sub.add_parser("compare-frames", help="direct vs scaled evolution at a fixed s")
    _family_args(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--s", type=float, default=1.0)
    p.set_defaults(func=cmd_compare_frames)

    p = sub.add_parser("heat-lower-bound", help="t_eps and optional heat blowup times")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--eps-list", type=_floats, required=True)
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--solve", action="store_true", help="also run the heat solver")
    p.set_defaults(func=cmd_heat_lower_bound)

    p = sub.add_parser("sweep", help="run a sweep plan (key=value file)")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit lifespan records from a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--model", choices=["power", "critical"], required=True)
    p.add_argument("--variable", choices=["T", "B"], default="T")
    p.add_argument("--family", default=None, help="override the family read from the labels")
    p.add_argument("--params", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args)
    except (ValueError, ArithmeticError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
