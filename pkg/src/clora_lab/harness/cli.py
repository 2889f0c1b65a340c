"""Command line entry point: ``clora-lab {train,continual,measure,sweep-k,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import CheckpointError, ConfigError, ConvergenceError, TrainingError
from . import checkpoint, config, reports
from .experiment import make_tasks, run_continual_experiment, run_measure, run_train, sweep_k

CHECKPOINT_NAME = "checkpoint.bin"


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--rank", type=int)
    common.add_argument("--method", choices=["lora", "clora", "lora_l2"])
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="clora-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train on the first task and write a checkpoint")
    p.add_argument("--max-steps", type=int, help="stop after this many optimizer steps")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")

    sub.add_parser("continual", parents=[common], help="sequential training over num_tasks tasks")

    p = sub.add_parser("measure", parents=[common], help="capacity/forgetting of a checkpoint")
    p.add_argument("--checkpoint", help=f"defaults to <out>/{CHECKPOINT_NAME}")

    p = sub.add_parser("sweep-k", parents=[common], help="train and measure over several k")
    p.add_argument("--k-values", type=_int_list, default=[4, 8, 16, 32])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])

    p = sub.add_parser("report", parents=[common], help="merge CSV reports into one table")
    p.add_argument("csv", nargs="*", help="CSV files (default: every CSV in --out)")
    return parser


def _config(args) -> config.ExperimentConfig:
    cfg = config.load(args.config) if args.config else config.ExperimentConfig()
    cfg = config.with_overrides(cfg, seed=args.seed, k=args.k, lam=args.lam, rank=args.rank,
                                method=args.method, out=args.out)
    return cfg.validate()


def cmd_train(args, cfg) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CHECKPOINT_NAME
    model = state = None
    if args.resume:
        model, state = checkpoint.load(ckpt, cfg)
    model, report, state = run_train(cfg, model=model, state=state, max_steps=args.max_steps)
    checkpoint.save(ckpt, cfg, model, state)
    config.save(cfg, out / "config.yaml")
    (out / "train_report.json").write_text(json.dumps(vars(report), indent=2, sort_keys=True))
    print(f"trained {report.steps} steps, final task loss {report.final_task_loss:.6g}; checkpoint {ckpt}")


def cmd_continual(args, cfg) -> None:
    report = run_continual_experiment(cfg)
    path = Path(cfg.out_dir) / "continual.csv"
    reports.write_continual(path, report)
    print(f"average accuracy after last task {report.average:.4f}; wrote {path}")


def cmd_measure(args, cfg) -> None:
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / CHECKPOINT_NAME
    model, _ = checkpoint.load(ckpt, cfg)
    record = run_measure(cfg, model, make_tasks(cfg))
    path = Path(cfg.out_dir) / "measure.csv"
    reports.write_measure(path, cfg, record)
    if record.absent:
        print(f"warning: no inputs collected for {', '.join(record.absent)}", file=sys.stderr)
    print(f"capacity {record.model_capacity:.6g}, forgetting {record.model_forgetting:.6g}; wrote {path}")


def cmd_sweep(args, cfg) -> None:
    rows = sweep_k(cfg, args.k_values, args.seeds)
    path = Path(cfg.out_dir) / "sweep_k.csv"
    reports.write_sweep(path, rows)
    print(reports.format_table(reports.SWEEP_HEADER, [{k: reports.cell(v) for k, v in vars(r).items()} for r in rows]))


def cmd_report(args, cfg) -> None:
    out = Path(cfg.out_dir)
    paths = [Path(p) for p in args.csv] or sorted(p for p in out.glob("*.csv") if p.name != "summary.csv")
    if not paths:
        raise ConfigError(f"no CSV reports found in {out}")
    header, rows = reports.merge(paths)
    reports.write_rows(out / "summary.csv", header, rows)
    print(reports.format_table(header, rows))


COMMANDS = {
    "train": cmd_train,
    "continual": cmd_continual,
    "measure": cmd_measure,
    "sweep-k": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, CheckpointError, TrainingError, ConvergenceError, OSError, ValueError) as exc:
        print(f"clora-lab {args.command}: error: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
