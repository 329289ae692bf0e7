"""Command-line entry point: ``pspin-gap <command> [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .config import dump_disorder, load_config, load_disorder, spec_from_dict
from .diagnostics import (CHECKS, DEFAULT_EPSILON, induction_replay, run_diagnostics,
                          write_reports, write_summary)
from .ensemble import plan_from_config, run_ensemble, sweep_report
from .gap import inverse_spectral_gap, max_subsystem_gap
from .glauber import estimate_relaxation, run_chains, integrated_time, write_trajectory
from .model import BudgetError, SpinGlass, SubsystemContext

EXIT_OK, EXIT_FAILED_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_model(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = spec_from_dict(cfg)
    disorder = load_disorder(args.disorder, spec.n_spins) if getattr(args, "disorder", None) else None
    return cfg, spec, SpinGlass(spec, disorder)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_disorder(args) -> int:
    _, spec, model = _load_model(args)
    path = _out_dir(args) / "disorder.bin"
    dump_disorder(model.disorder, path)
    print(f"wrote {path} (N={spec.n_spins}, p={[p for p, _ in spec.mixing]})")
    return EXIT_OK


def cmd_gap(args) -> int:
    _, spec, model = _load_model(args)
    res = inverse_spectral_gap(model, SubsystemContext.full(spec.n_spins))
    print(f"a = {res.a:.6f}")
    out = res.to_dict()
    if args.all_k:
        table = []
        print(f"{'k':>3} {'n_free':>6} {'a_max':>12} {'contexts':>9}")
        for k in range(spec.n_spins - 1, -1, -1):
            sg = max_subsystem_gap(model, k, workers=args.threads)
            table.append({"k": k, "n_free": spec.n_spins - k, "a": sg.a,
                          "argmax": sg.argmax.describe(), "n_evaluated": sg.n_evaluated})
            print(f"{k:>3} {spec.n_spins - k:>6} {sg.a:>12.6f} {sg.n_evaluated:>9}")
        out["all_k"] = table
    if args.out:
        _write_json(_out_dir(args) / "gap.json", out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    _, spec, model = _load_model(args)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else list(CHECKS)
    bad = set(checks) - set(CHECKS)
    if bad:
        raise UsageError(f"unknown checks {sorted(bad)}; choose from {', '.join(CHECKS)}")
    reports = run_diagnostics(model, checks, spec.seed, args.epsilon, exact_omega=args.exact_omega)
    out = _out_dir(args)
    write_reports(reports, out / "reports.jsonl")
    write_summary(reports, out / "summary.csv")
    failed = [r for r in reports if r.violated()]
    print(f"{len(reports)} reports, {sum(r.hypothesis_met for r in reports)} asserted, "
          f"{len(failed)} violated")
    for r in failed:
        print(f"VIOLATED {r.name} slack={r.slack:.3e} ctx={r.ctx}", file=sys.stderr)
    return EXIT_FAILED_CHECK if failed else EXIT_OK


def cmd_glauber(args) -> int:
    _, spec, model = _load_model(args)
    if args.steps <= args.burn_in:
        raise UsageError("--steps must exceed --burn-in")
    results = run_chains(model, args.chains, args.steps, spec.seed, workers=args.threads,
                         burn_in=args.burn_in)
    out = _out_dir(args)
    chains = []
    print(f"{'chain':>5} {'tau_m':>10} {'mean_m':>10} {'mean_E':>12} {'flip_rate':>9}")
    for c, res in enumerate(results):
        try:
            tau, window = integrated_time(res.magnetization)
        except ValueError as exc:
            raise UsageError(f"chain {c}: {exc}; increase --steps") from None
        row = {"chain": c, "tau_magnetization_sweeps": tau, "window": window,
               "n_sweeps": len(res.magnetization),
               "mean_magnetization": float(res.magnetization.mean()),
               "mean_energy": float(res.energy.mean()),
               "flip_rate": res.n_flips / args.steps, "max_drift": res.max_drift}
        chains.append(row)
        print(f"{c:>5} {tau:>10.4f} {row['mean_magnetization']:>10.4f} "
              f"{row['mean_energy']:>12.4f} {row['flip_rate']:>9.4f}")
    _write_json(out / "glauber.json", {"steps": args.steps, "burn_in": args.burn_in,
                                       "seed": spec.seed, "chains": chains})
    if args.trajectory:
        stats = estimate_relaxation(model, args.steps, args.burn_in, spec.seed)
        write_trajectory(stats, out / "trajectory.csv")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    path = args.plan or args.config
    if not path:
        raise UsageError("--plan (or --config) is required")
    cfg = load_config(path)
    if args.seed is not None:
        cfg["seed"] = args.seed
    plan = plan_from_config(cfg, spec_from_dict(cfg), args.out)
    if args.epsilon_given:
        plan = dataclasses.replace(plan, epsilon=args.epsilon)
    report = run_ensemble(plan, workers=args.threads)
    paths = sweep_report(report, plan.output or args.out)
    print(f"{'N':>3} {'scale':>8} {'n':>5} {'p_hat':>7} {'stderr':>7} {'a_mean':>9} {'omega':>6}")
    for a in report.aggregates:
        print(f"{a['n_spins']:>3} {a['beta_scale']:>8.4g} {a['n']:>5} {a['p_hat']:>7.3f} "
              f"{a['stderr']:>7.3f} {a['a_mean']:>9.5f} {a['omega_freq']:>6.2f}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_replay(args) -> int:
    _, spec, model = _load_model(args)
    steps = induction_replay(model, args.epsilon)
    rows = []
    print(f"{'k':>3} {'n_free':>6} {'a':>12} {'<=1+40e^.25':>12} {'<=5a_prev':>10}")
    for s in steps:
        rows.append({"k": s.k, "n_free": s.n_free, "a": s.a, "a_prev": s.a_prev,
                     "within_bound": s.within_bound, "jump_ok": s.jump_ok,
                     "hypothesis": s.hypothesis,
                     "dichotomy": json.loads(s.report.to_json()) if s.report else None})
        print(f"{s.k:>3} {s.n_free:>6} {s.a:>12.6f} {str(s.within_bound):>12} {str(s.jump_ok):>10}")
    _write_json(_out_dir(args) / "replay.json", {"epsilon": args.epsilon, "steps": rows})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pspin-gap",
                                     description="Spectral gap toolkit for mixed p-spin glasses.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="model config (TOML)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: all cores)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--disorder", help="load couplings from a gen-disorder dump")
    common.add_argument("--epsilon", type=float, default=None)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-disorder", parents=[common], help="write the coupling arrays")
    p.set_defaults(func=cmd_gen_disorder)

    p = sub.add_parser("gap", parents=[common], help="inverse spectral gap a_{H_N}")
    p.add_argument("--all-k", action="store_true", help="also tabulate a_{N-k} for every k")
    p.set_defaults(func=cmd_gap, out=None)

    p = sub.add_parser("diagnose", parents=[common], help="identity and inequality checks")
    p.add_argument("--checks", help=f"comma list from: {', '.join(CHECKS)}")
    p.add_argument("--exact-omega", action="store_true", help="enumerate Omega exactly (N <= 10)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("glauber", parents=[common], help="heat-bath chains")
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--trajectory", action="store_true", help="dump chain 0 as trajectory.csv")
    p.set_defaults(func=cmd_glauber)

    p = sub.add_parser("ensemble", parents=[common], help="disorder ensemble sweep")
    p.add_argument("--plan", help="config with an [experiment] table")
    p.set_defaults(func=cmd_ensemble, out=None)

    p = sub.add_parser("replay", parents=[common], help="a_{N-k} from k = N-1 down to 0")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.epsilon_given = args.epsilon is not None
    if args.epsilon is None:
        args.epsilon = 0.1 if args.command == "ensemble" else DEFAULT_EPSILON
    if args.threads < 1:
        parser.error("--threads must be positive")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        # single-threaded BLAS keeps floating-point results independent of --threads
        with threadpool_limits(1):
            return args.func(args)
    except (UsageError, BudgetError, ValueError, OSError) as exc:
        print(f"pspin-gap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
