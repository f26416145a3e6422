"""Command line: train, eval, emit-plots, show-config."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .experiment import EmptyReport, MetricsReport, MissingCheckpoint, emit_plot_data, run_evaluation, run_training
from .scenario import ORCHESTRATORS, PRESETS, InvalidConfig, load_config, preset


def _config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset)
    overrides = {}
    if getattr(args, "orchestrator", None):
        overrides["orchestrators"] = args.orchestrator
    if getattr(args, "devices", None):
        overrides["device_counts"] = args.devices
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    return cfg.replace(**overrides) if overrides else cfg


def cmd_train(args) -> int:
    cfg = _config(args)

    def show(row):
        print(f"episode {row['episode']:3d}  eps {row['epsilon']:.3f}  "
              f"failed {row['failed_task_pct']:6.2f}%  reward {row['cumulative_reward']}")

    res = run_training(cfg, episodes=args.episodes, out_dir=args.out,
                       device_count=args.train_devices, progress=show)
    print(f"best checkpoint: {res['checkpoint']}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    report = run_evaluation(cfg, checkpoint=args.checkpoint, out_dir=args.out)
    for row in report.aggregate("failed_task_pct"):
        print(f"{row['orchestrator']:>12s} {row['device_count']:6d}  failed {row['mean']:6.2f}% "
              f"(+/- {row['stderr']:.2f})")
    return 0


def cmd_emit(args) -> int:
    report = MetricsReport.from_csv(args.report)
    for path in emit_plot_data(report, args.out):
        print(path)
    return 0


def cmd_show_config(args) -> int:
    cfg = _config(args)
    sys.stdout.write(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgesim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--config", type=Path, help="YAML scenario document")
        sp.add_argument("--preset", default="desk", choices=sorted(PRESETS),
                        help="base scenario when --config is not given (default: desk)")

    t = sub.add_parser("train", help="train the DDQN orchestrator online")
    scenario_args(t)
    t.add_argument("--episodes", type=int, default=None)
    t.add_argument("--train-devices", type=int, default=None)
    t.add_argument("--out", type=Path, required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="sweep orchestrators x device counts x seeds")
    scenario_args(e)
    e.add_argument("--checkpoint", type=Path)
    e.add_argument("--orchestrator", nargs="+", choices=ORCHESTRATORS)
    e.add_argument("--devices", nargs="+", type=int)
    e.add_argument("--seeds", nargs="+", type=int)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("emit-plots", help="write figure data files from a report.csv")
    m.add_argument("--report", type=Path, required=True)
    m.add_argument("--out", type=Path, required=True)
    m.set_defaults(func=cmd_emit)

    s = sub.add_parser("show-config", help="print the resolved scenario document")
    scenario_args(s)
    s.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfig, MissingCheckpoint, EmptyReport, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
