"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as config_mod
from .errors import ConfigError, DynSampleError
from .harness import Experiment, build_learner, compare_strategies, dumps_report, resume_experiment
from .samplers import Strategy

OUTPUT_ROOT_ENV = "DYNSAMPLE_OUTPUT_ROOT"

def _out_dir(args, cfg, config_path) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / Path(config_path).stem


def _load(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"experiment.seed={args.seed}")
    return config_mod.load(args.config, overrides)


def _print_row(row):
    print(
        f"iter {row.iteration:4d}  examples {row.cumulative_examples_trained:9d}  "
        f"dev {row.dev_cost:.5f}  active {row.active_count:6d}  demoted {row.dlow_count:6d}  "
        f"noise {row.noise_fraction_in_selected:.3f}",
        flush=True,
    )


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg, args.config)
    exp = Experiment(cfg)
    res = exp.run(out, stop_after=args.stop_after, on_row=None if args.quiet else _print_row)
    state = "complete" if res.completed else f"stopped at iteration {exp.ledger.iteration}"
    print(f"{cfg.sampler.strategy.value}: {state}; outputs in {out}")
    return 0


def cmd_resume(args) -> int:
    ck = Path(args.checkpoint)
    if args.out:
        out = Path(args.out)
    else:
        out = ck.parent.parent if ck.parent.name == "checkpoints" else ck.parent
    res = resume_experiment(ck, out, stop_after=args.stop_after, on_row=None if args.quiet else _print_row)
    state = "complete" if res.completed else f"stopped at iteration {res.ledger.iteration}"
    print(f"{res.config.sampler.strategy.value}: {state}; outputs in {out}")
    return 0


def cmd_compare(args) -> int:
    base = _load(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    try:
        configs = [base.with_strategy(Strategy(s)) for s in strategies]
    except ValueError as exc:
        raise ConfigError("--strategies", str(exc))
    report = compare_strategies(configs, workers=args.workers)
    out = _out_dir(args, base, args.config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(dumps_report(report), encoding="utf-8")
    print(f"threshold {report['threshold']:.5f}")
    for run in report["runs"]:
        x = run["examples_to_threshold"]
        x = "never" if x is None else f"{x:.0f}"
        print(
            f"{run['strategy']:>13}: examples-to-threshold {x:>9}  best dev {run['best_dev_cost']:.5f}  "
            f"regression {run['post_best_regression']:+.4f}"
        )
    print(f"report written to {out / 'comparison.json'}")
    return 0


def cmd_dump_dataset(args) -> int:
    cfg = _load(args)
    learner = build_learner(cfg)
    target = Path(args.output) if args.output else _out_dir(args, cfg, args.config) / "dataset.txt"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("".join(line + "\n" for line in learner.dataset_lines()), encoding="utf-8")
    print(f"{learner.size} examples ({int(learner.is_noise.sum())} noise) written to {target}")
    return 0


def cmd_validate(args) -> int:
    for path in args.configs:
        config_mod.load(path, args.set or [])
        print(f"ok: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynsample", description="Dynamic cost-delta sampling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--seed", type=int, help="shorthand for --set experiment.seed=N")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="run an experiment")
    add_config_args(p)
    p.add_argument("--stop-after", type=int, help="stop (with a checkpoint) after this many iterations")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue an experiment from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output directory (default: the checkpoint's run directory)")
    p.add_argument("--stop-after", type=int)
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("compare", help="compare sampling strategies on one config")
    add_config_args(p)
    p.add_argument("--strategies", default="full,ws,rm,hard_removal", help="comma-separated strategy names")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-dataset", help="write the generated training data as text")
    add_config_args(p)
    p.add_argument("--output", help="target file (default: <out>/dataset.txt)")
    p.set_defaults(func=cmd_dump_dataset)

    p = sub.add_parser("validate-config", help="check config files without running")
    p.add_argument("configs", nargs="+")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DynSampleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
