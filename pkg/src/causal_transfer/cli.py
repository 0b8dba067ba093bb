"""Command-line entry point: ``causal-transfer <command> [options]``.

Commands:
  reproduce-tables  causal-bound tables versus reference values
  compute-bounds    bounded model, Q bounds and value bounds for an experiment
  run-learning      learner sweep over seeds: CSV curves, summary and an SVG plot
  evaluate          optimum versus naive-model plan, with Monte-Carlo returns

Every command runs each ``--config`` (preset name or TOML path; default:
both presets), writes artifacts named ``<experiment>_*`` under ``--out`` and
exits 0 only when every embedded check passes (1 otherwise, 2 on config or
IO errors).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .experiments import ALGORITHMS, PRESETS, Pipeline, load_config, reference_values, run_learning, table_rows
from .learners import write_curves_csv
from .reporting import (Check, learning_checks, naive_checks, plot_learning_svg, summarize,
                        write_checks_csv, write_summary_csv, write_table_csv)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="PATH",
                        help=f"experiment TOML or preset name {PRESETS}; repeatable")
    common.add_argument("--seed-base", type=int, default=0, metavar="N",
                        help="first seed; run i uses seed N + i (default 0)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker processes for seed-level parallelism")
    common.add_argument("--out", type=Path, default=Path("results"), metavar="DIR",
                        help="output directory (default ./results)")

    parser = argparse.ArgumentParser(prog="causal-transfer", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("reproduce-tables", parents=[common],
                   help="compare do-effects, naive estimates and causal bounds with reference values")
    cb = sub.add_parser("compute-bounds", parents=[common],
                        help="write the bounded model, Q bounds and value bounds")
    cb.add_argument("--dataset", type=Path, metavar="CSV",
                    help="demonstrator tuples (s, a, s_next, r) to use instead of the configured source")
    rl = sub.add_parser("run-learning", parents=[common], help="run the learner sweep")
    rl.add_argument("--episodes", type=int, help="override the configured episode count")
    rl.add_argument("--seeds", type=int, help="override the configured number of seeds")
    rl.add_argument("--algorithms", nargs="+", choices=ALGORITHMS, help="subset of learners to run")
    ev = sub.add_parser("evaluate", parents=[common],
                        help="optimum versus naive-model plan with Monte-Carlo returns")
    ev.add_argument("--episodes", type=int, help="Monte-Carlo episodes per policy")
    return parser


def _report(checks: list[Check]) -> bool:
    for c in checks:
        print(f"  [{c.status}] {c.name}: {c.detail}")
    return all(c.passed is not False for c in checks)


def _write_key_values(path: Path, values: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for k, v in values.items():
            w.writerow([k, repr(float(v))])


def _reproduce_tables(pipe: Pipeline, args, out: Path) -> bool:
    rows = table_rows(pipe)
    write_table_csv(out / f"{pipe.cfg.name}_table.csv", rows)
    print(f"{'pair':<22}{'do':>9}{'naive':>9}{'lo':>9}{'hi':>9}   reference")
    for r in rows:
        pair = f"({r['state']},{r['action']}" + (f",{r['next_state']})" if r["next_state"] else ")")
        print(f"{pair:<22}{r['do_effect']:9.4f}{r['naive']:9.4f}{r['lo']:9.4f}{r['hi']:9.4f}   "
              f"{r['ref_do_effect']:g} {r['ref_naive']:g} [{r['ref_lo']:g}, {r['ref_hi']:g}]")
    tol = pipe.cfg.table_tolerance
    return _report([Check(f"row_{i}", r["ok"], f"max deviation {r['max_deviation']:.2e} (tol {tol:g})")
                    for i, r in enumerate(rows)])


def _compute_bounds(pipe: Pipeline, args, out: Path) -> bool:
    # Compute everything first so a failure leaves no partial outputs.
    obs = pipe.observations()
    model = pipe.model()
    v_lo, v_hi, qb = pipe.value_bounds()
    v_star, q_star = pipe.q_star()
    labels = pipe.env.states.labels
    name = pipe.cfg.name
    obs.save_json(out / f"{name}_observations.json")
    model.save_json(out / f"{name}_bounded_model.json")
    qb.save_json(out / f"{name}_q_bounds.json")
    with open(out / f"{name}_value_bounds.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "v_lo", "v_star", "v_hi"])
        for s in range(len(v_star)):
            w.writerow([labels[s], repr(float(v_lo[s])), repr(float(v_star[s])), repr(float(v_hi[s]))])
    tol = 1e-8
    q_ok = qb.contains(q_star, tol)
    v_ok = bool(np.all(v_lo <= v_star + tol) and np.all(v_star <= v_hi + tol))
    s0 = pipe.start
    print(f"V*({labels[s0]}) = {v_star[s0]:.4f} in [{v_lo[s0]:.4f}, {v_hi[s0]:.4f}]")
    return _report([
        Check("q_star_within_q_bounds", q_ok, "Q* inside [Q_lo, Q_hi] at every pair"),
        Check("v_star_bracketed", v_ok, "V_lo <= V* <= V_hi at every state"),
    ])


def _run_learning(pipe: Pipeline, args, out: Path) -> bool:
    cfg = pipe.cfg
    ref = reference_values(pipe)
    results = run_learning(pipe, args.seed_base, args.workers, algorithms=args.algorithms,
                           seeds=args.seeds, episodes=args.episodes)
    name = cfg.name
    for alg, runs in results.items():
        write_curves_csv(out / f"{name}_curves_{alg}.csv", [r.curve for r in runs])
    write_summary_csv(out / f"{name}_summary.csv",
                      {alg: summarize(runs, ref["v_star"]) for alg, runs in results.items()})
    _write_key_values(out / f"{name}_reference.csv",
                      {k: ref[k] for k in ("v_star", "naive_plan_value", "naive_policy_value")})
    plot_learning_svg(out / f"{name}_learning.svg", results, ref["v_star"], ref["naive_plan_value"],
                      title=f"{name} grid")
    checks = naive_checks(ref)[:1] + learning_checks(results, ref["v_star"], cfg.tolerance_fraction)
    write_checks_csv(out / f"{name}_checks.csv", checks)
    return _report(checks)


def _evaluate(pipe: Pipeline, args, out: Path) -> bool:
    ref = reference_values(pipe, episodes=args.episodes)
    _write_key_values(out / f"{pipe.cfg.name}_evaluate.csv", ref)
    for k, v in ref.items():
        print(f"  {k:<20}{v: .4f}")
    return _report(naive_checks(ref))


COMMANDS = {
    "reproduce-tables": _reproduce_tables,
    "compute-bounds": _compute_bounds,
    "run-learning": _run_learning,
    "evaluate": _evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        configs = [load_config(c) for c in (args.config or PRESETS)]
        names = [c.name for c in configs]
        if len(set(names)) != len(names):
            raise ValueError(f"experiment names must be distinct, got {names}")
        dataset = getattr(args, "dataset", None)
        if dataset is not None:
            if len(configs) != 1:
                raise ValueError("--dataset needs exactly one --config")
            if not dataset.exists():
                raise FileNotFoundError(f"dataset {dataset} does not exist")
        args.out.mkdir(parents=True, exist_ok=True)
        ok = True
        for cfg in configs:
            print(f"== {args.command}: {cfg.name}")
            ok &= COMMANDS[args.command](Pipeline(cfg, dataset), args, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print("all checks passed" if ok else "some checks failed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
