"""Command line entry point.

Subcommands: pretrain, train, transfer, theory-check, report. Any
validation failure exits nonzero with a message on stderr before any
computation starts.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .checkpoint import CheckpointError
from .config import ConfigError, ExperimentConfig, load_config


def _parse_seeds(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.split(",") if part.strip())


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None):
        overrides["seeds"] = _parse_seeds(args.seed)
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "algorithm", None):
        overrides["algorithm"] = args.algorithm
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        from .experiment import _config_from_dict
        cfg = _config_from_dict(d)
    return cfg


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required,
                   help="plain-text config file (key = value lines)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", help="seed or comma separated seed list (overrides config)")
    p.add_argument("--mode", choices=("concurrent", "alternate"),
                   help="override the training mode")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed processes")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def cmd_pretrain(args) -> int:
    from .experiment import run_pretrain
    cfg = _load_cfg(args)
    paths = run_pretrain(cfg, args.out, jobs=args.jobs)
    for seed, path in paths.items():
        print(f"seed {seed}: {path}")
    return 0


def cmd_train(args) -> int:
    from .experiment import run_train
    cfg = _load_cfg(args)
    skills = _resolve_per_seed(args.skills, cfg.seeds, "skills_seed_{seed}.bin") \
        if args.skills else None
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    dirs = run_train(cfg, args.out, skills=skills, jobs=args.jobs, log=log)
    for d in dirs:
        print(d)
    return 0


def cmd_transfer(args) -> int:
    from .experiment import run_train
    cfg = _load_cfg(args)
    if not cfg.no_annealing:
        d = cfg.to_dict()
        d["no_annealing"] = True
        from .experiment import _config_from_dict
        cfg = _config_from_dict(d)
    source = _resolve_per_seed(args.source, cfg.seeds, "seed_{seed}/checkpoint.bin") \
        if args.transfer != "none" else None
    dirs = run_train(cfg, args.out, transfer=args.transfer, source=source,
                     jobs=args.jobs, log=None if args.quiet else print)
    for d in dirs:
        print(d)
    return 0


def _resolve_per_seed(path: str, seeds, pattern: str):
    """A file path is shared; a directory maps each seed via pattern."""
    if os.path.isdir(path):
        mapping = {}
        for seed in seeds:
            candidate = os.path.join(path, pattern.format(seed=seed))
            if not os.path.exists(candidate):
                raise CheckpointError(f"missing checkpoint for seed {seed}: {candidate}")
            mapping[seed] = candidate
        return mapping
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    return path


def cmd_theory_check(args) -> int:
    from .theory import verification_suite
    rows = verification_suite(n_instances=args.instances, seed=args.seed_value)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    n_fail = sum(1 for r in rows if not r["pass"])
    worst = max(r["decomposition_residual"] for r in rows)
    print(f"{len(rows)} instances, {n_fail} failures, "
          f"max decomposition residual {worst:.3e} -> {args.out}")
    return 0 if n_fail == 0 else 1


def cmd_report(args) -> int:
    from .experiment import run_report
    run_dirs = []
    for entry in args.runs:
        if os.path.isfile(os.path.join(entry, "metrics.csv")):
            run_dirs.append(entry)
        else:
            seeds = sorted(d for d in os.listdir(entry) if d.startswith("seed_"))
            run_dirs.extend(os.path.join(entry, d) for d in seeds)
    run_report(run_dirs, args.out)
    print(f"report over {len(run_dirs)} runs -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="haarlab",
        description="Two-level skill training with advantage-split auxiliary rewards")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pre-train the initial skill set")
    _add_common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("train", help="run training for every seed")
    _add_common(p)
    p.add_argument("--algorithm", choices=("haar", "haar_no_anneal", "flat_trpo",
                                           "frozen_skills"))
    p.add_argument("--skills", help="pre-trained skills: checkpoint file or directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("transfer", help="train on a target maze from a source checkpoint")
    _add_common(p)
    p.add_argument("--source", required=True,
                   help="source run checkpoint (file) or run directory tree")
    p.add_argument("--transfer", required=True, choices=("both", "low_only", "none"))
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("theory-check", help="exact verification of the improvement lemmas")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", dest="seed_value", type=int, default=0)
    p.set_defaults(fn=cmd_theory_check)

    p = sub.add_parser("report", help="aggregate run metrics into a plot-ready CSV")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories (seed dirs or their parents)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
