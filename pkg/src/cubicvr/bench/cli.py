"""Command-line entry point: ``run``, ``verify`` and ``report``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError


def _cmd_run(args) -> int:
    from .config import load_config
    from .runner import run_experiment

    try:
        cfg = load_config(args.config)
    except ValidationError as exc:
        fields = sorted({".".join(str(p) for p in e["loc"]) for e in exc.errors()})
        print(f"invalid config: {', '.join(fields)}\n{exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    try:
        summary = run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    except FileNotFoundError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    for r in summary["runs"]:
        print(f"{r['name']}: steps={r['steps']} cum_hess={r['cum_hess_samples']} f_gap={r['final_f_gap']:.6e}")
    return 1 if any(r["error"] for r in summary["runs"]) else 0


def _cmd_verify(args) -> int:
    from ..verify import run_suite

    report = run_suite(args.suite)
    print(json.dumps(report, indent=1))
    return 0 if report["passed"] else 1


def _cmd_report(args) -> int:
    from .report import ReportError, report_from_glob

    try:
        rep = report_from_glob(args.glob, args.budgets)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 2
    print(rep.to_text())
    if args.csv:
        rep.write_csv(Path(args.csv))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cubicvr", description="Variance-reduced cubic regularization benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite", required=True, choices=["solver", "estimators", "descent", "schedule"])
    v.set_defaults(func=_cmd_verify)

    rep = sub.add_parser("report", help="compare trace CSVs on a Hessian-sample grid")
    rep.add_argument("--glob", required=True)
    rep.add_argument("--budgets", nargs="*", default=None, help="counts, or multiples of n like 5n")
    rep.add_argument("--csv", default=None, help="also write the table here")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
