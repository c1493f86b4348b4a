"""Command line entry point: ``offgpi {run,compare,plot,taylor}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .algos import ALGOS, ConfigError, TrainingDiverged
from .envs import ENVS


def _seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _positive(text):
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="offgpi", description="Off-policy actor-critic experiments at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one run per seed and write a run directory")
    r.add_argument("--algo", choices=ALGOS, required=True)
    r.add_argument("--env", choices=sorted(ENVS), required=True)
    r.add_argument("--seeds", type=_seeds, default=[0])
    r.add_argument("--steps", type=_positive, required=True)
    r.add_argument("--eval-every", type=_positive, default=1000)
    r.add_argument("--depth", type=int, choices=(2, 3), help="number of hidden layers")
    r.add_argument("--hidden", type=_positive, help="width of every hidden layer")
    r.add_argument("--config", type=Path, help="key = value file overriding the defaults")
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    r.add_argument("--workers", type=_positive, default=1, help="parallel seed processes")

    c = sub.add_parser("compare", help="Welch's t-test on final returns of two runs")
    c.add_argument("run_a", type=Path)
    c.add_argument("run_b", type=Path)
    c.add_argument("--window", type=_positive, default=1, help="average the last N evaluations per seed")
    c.add_argument("--step", type=int, help="compare at this evaluation step instead of the last")
    c.add_argument("--json", action="store_true")

    pl = sub.add_parser("plot", help="mean curve with a +/-1 std band per run, as SVG")
    pl.add_argument("runs", type=Path, nargs="+")
    pl.add_argument("--out", type=Path, required=True)
    pl.add_argument("--mode", choices=("return", "sigma"), default="return")

    t = sub.add_parser("taylor", help="second-order residual analysis of a checkpointed seed")
    t.add_argument("seed_dir", type=Path)
    t.add_argument("--sigma", type=float, default=0.1)
    t.add_argument("--states", type=_positive, default=256)
    t.add_argument("--mc-samples", type=_positive, default=20_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--eps", type=float, default=1e-3)
    return p


def _run(args):
    cfg = harness.build_config(args.algo, args.config, args.depth, args.hidden)
    harness.run(args.algo, args.env, args.seeds, args.steps, args.eval_every, args.out, cfg, args.force,
                args.workers)
    print((args.out / "summary.json").read_text(), end="")


def _compare(args):
    report = harness.compare(args.run_a, args.run_b, args.window, args.step)
    print(harness.report_json(report) if args.json else report.to_text())


def _plot(args):
    summary = harness.plot(args.runs, args.out, args.mode)
    print(f"wrote {summary.path} ({summary.n_lines} lines, {summary.n_bands} bands)")


def _taylor(args):
    report = harness.taylor_from_checkpoint(args.seed_dir, args.sigma, args.states, args.mc_samples, args.seed,
                                            args.eps)
    print(harness.report_json(report))


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "compare": _compare, "plot": _plot, "taylor": _taylor}[args.command]
    try:
        handler(args)
    except (harness.RunError, ConfigError, TrainingDiverged, FileNotFoundError, ValueError) as exc:
        print(f"offgpi {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
