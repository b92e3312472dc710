"""Command-line interface.

Commands: permset, train, eval, report, fetch.
Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from stagewise.cli import config as config_mod
from stagewise.cli.datasets import fetch_dataset, load_dataset
from stagewise.engine.trainer import run_plan
from stagewise.errors import ConfigError, StagewiseError
from stagewise.eval.features import extract_block_features
from stagewise.eval.finetune import FinetuneSchedule, semi_supervised_finetune
from stagewise.eval.probe import ProbeReport, ProbeSchedule, linear_probe
from stagewise.eval.subset import class_balanced_subset
from stagewise.model.backbone import BackboneConfig, build_backbone
from stagewise.model.checkpoint import backbone_config_from_payload, load_checkpoint, restore_backbone
from stagewise.partition import make_stages, partition_table
from stagewise.tasks.permutations import generate_permutation_set, nest_levels, write_permutation_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


@contextmanager
def run_lock(run_dir: Path):
    """Exclusive lock on a run directory; refuses concurrent writers."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock_path = run_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StagewiseError(
            f"run directory {run_dir} is locked by another writer ({lock_path}); "
            f"remove the stale lock if no run is active"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield run_dir
    finally:
        lock_path.unlink(missing_ok=True)


def _resolve_config(args) -> dict:
    if args.preset:
        cfg = config_mod.preset(args.preset)
        cfg = config_mod.apply_env_overrides(cfg)
    elif args.config:
        cfg = config_mod.load_config(args.config)
    else:
        raise ConfigError("provide --config FILE or --preset NAME")
    for override in args.set or []:
        if "=" not in override:
            raise ConfigError(f"--set expects key=value, got {override!r}")
        key, _, value = override.partition("=")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = config_mod._parse_scalar(value)
    return config_mod.validate_config(cfg)


def cmd_permset(args) -> int:
    levels = [int(v) for v in args.levels.split(",")]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = generate_permutation_set(
        args.n, max(levels), seed=args.seed, min_pairwise_hamming=args.min_hamming
    )
    stats = []
    for i, pset in enumerate(nest_levels(base, levels), start=1):
        path = out_dir / f"permutations_level{i}.csv"
        write_permutation_csv(path, pset)
        stats.append(
            {
                "level": i,
                "cardinality": pset.cardinality,
                "avg_hamming": pset.avg_hamming,
                "min_hamming": pset.min_pairwise_hamming(),
                "file": path.name,
            }
        )
    summary = {"n_elements": args.n, "seed": args.seed, "levels": stats}
    (out_dir / "permset_stats.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for s in stats:
        print(
            f"level {s['level']}: cardinality {s['cardinality']}, "
            f"avg_hamming {s['avg_hamming']:.4f}, min_hamming {s['min_hamming']}"
        )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    train_ds, _ = load_dataset(cfg["dataset"])
    plan = config_mod.plan_from_config(
        cfg, image_size=train_ds.image_size, image_channels=train_ds.channels
    )
    chash = config_mod.config_hash(cfg)
    run_dir = Path(cfg["output_dir"]) / cfg["run_id"]
    with run_lock(run_dir):
        (run_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
        _, log = run_plan(
            plan, train_ds, out_dir=run_dir,
            resume_from=args.resume, config_hash=chash,
        )
        log.write_jsonl(run_dir / "trainlog.jsonl")
    final = run_dir / "final.ckpt"
    if not final.exists():
        raise StagewiseError(f"run finished but {final} was not written")
    print(f"run {cfg['run_id']}: {plan.partition.num_stages} stage(s) complete, final={final}")
    return EXIT_OK


def _probe_all_blocks(model, partition, train_ds, eval_ds, schedule: ProbeSchedule,
                      dump_dir: Path | None = None):
    import numpy as np

    accs = {}
    for spec in partition.blocks:
        tr_x, tr_y = extract_block_features(model, partition, spec.name, train_ds)
        ev_x, ev_y = extract_block_features(model, partition, spec.name, eval_ds)
        accs[spec.name] = linear_probe(tr_x, tr_y, ev_x, ev_y, schedule)
        if dump_dir is not None:
            np.savez(
                dump_dir / f"features_{spec.name}.npz",
                train_features=tr_x, train_labels=tr_y,
                eval_features=ev_x, eval_labels=ev_y,
            )
    return accs


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    train_ds, eval_ds = load_dataset(cfg["dataset"])
    payload = load_checkpoint(args.checkpoint)
    model, specs = restore_backbone(payload)
    width = cfg.get("train", {}).get("stage_width", 3)
    partition = make_stages(specs, min(width, len(specs)))

    eval_cfg = cfg.get("eval", {})
    schedule = ProbeSchedule(
        epochs=eval_cfg.get("probe_epochs", 30),
        base_lr=eval_cfg.get("probe_lr", 0.1),
        batch_size=eval_cfg.get("probe_batch_size", 256),
        seed=cfg["seed"],
    )
    dump_dir = None
    if args.dump_features:
        dump_dir = Path(args.dump_features)
        dump_dir.mkdir(parents=True, exist_ok=True)
    accs = _probe_all_blocks(model, partition, train_ds, eval_ds, schedule, dump_dir=dump_dir)

    if args.baseline_checkpoint:
        base_model, _ = restore_backbone(load_checkpoint(args.baseline_checkpoint))
    else:
        stored = backbone_config_from_payload(payload)
        base_config = BackboneConfig(
            input_channels=stored.input_channels,
            stem_width=stored.stem_width,
            blocks=stored.blocks,
            seed=eval_cfg.get("baseline_seed", cfg["seed"] + 9999),
        )
        base_model, _ = build_backbone(base_config, input_size=payload["input_size"])
    baseline = _probe_all_blocks(base_model, partition, train_ds, eval_ds, schedule)

    meta = {
        "config_hash": config_mod.config_hash(cfg),
        "probe_epochs": schedule.epochs,
        "probe_lr": schedule.base_lr,
        "probe_batch_size": schedule.batch_size,
        "probe_seed": schedule.seed,
    }
    if args.semi_supervised:
        semi_cfg = eval_cfg.get("semi_supervised", {})
        sched = FinetuneSchedule(
            epochs=semi_cfg.get("epochs", 10),
            base_lr=semi_cfg.get("base_lr", 0.01),
            batch_size=semi_cfg.get("batch_size", 64),
            seed=cfg["seed"],
        )
        semi = {}
        for fraction in semi_cfg.get("fractions", [0.01, 0.1]):
            spec, indices = class_balanced_subset(train_ds.labels, fraction, cfg["seed"])
            tuned, _ = restore_backbone(payload)
            result = semi_supervised_finetune(tuned, train_ds, indices, eval_ds, sched)
            semi[str(fraction)] = {"per_class": spec.per_class_counts, **result}
        meta["semi_supervised"] = semi

    report = ProbeReport(
        protocol="frozen-linear",
        dataset_id=train_ds.name,
        checkpoint_id=str(args.checkpoint),
        block_accuracies=accs,
        baseline_accuracies=baseline,
        meta=meta,
    )
    out = Path(args.out or "probe_report.json")
    out.write_text(report.to_json())
    print(report.render_table())
    print(f"report written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.probe_report:
        report = ProbeReport.from_json(Path(args.probe_report).read_text())
        print(f"protocol: {report.protocol}  dataset: {report.dataset_id}")
        print(f"checkpoint: {report.checkpoint_id}")
        print(report.render_table())
        best, acc = report.best_block()
        print(f"best block: {best} ({acc*100:.1f}%)")
        return EXIT_OK
    if args.checkpoint:
        payload = load_checkpoint(args.checkpoint)
        _, specs = restore_backbone(payload)
        partition = make_stages(specs, min(args.stage_width, len(specs)))
        print(partition_table(partition))
        print(f"step: {payload['step']}  completed stage: {payload['completed_stage']}")
        heads = payload.get("heads", {})
        print(f"head parameter groups: {len(heads)}")
        return EXIT_OK
    raise ConfigError("report needs --probe-report FILE or --checkpoint FILE")


def cmd_fetch(args) -> int:
    root = fetch_dataset(args.name, args.root)
    print(f"{args.name} ready under {root}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagewise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("permset", help="generate nested jigsaw permutation sets")
    p.add_argument("--n", type=int, default=9, help="elements per permutation (grid cells)")
    p.add_argument("--levels", type=str, default="500,1000,2000",
                   help="comma-separated ascending cardinalities")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-hamming", type=int, default=3, dest="min_hamming")
    p.add_argument("--out", type=str, default="permsets")
    p.set_defaults(func=cmd_permset)

    for name, func, extra in (
        ("train", cmd_train, "run a pretraining plan"),
        ("eval", cmd_eval, "probe a checkpoint per block"),
    ):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--preset", type=str, default=None)
        p.add_argument("--set", action="append", default=None,
                       help="dotted config override, e.g. train.batch_size=32")
        if name == "train":
            p.add_argument("--resume", type=str, default=None,
                           help="stage-boundary checkpoint to resume from")
        if name == "eval":
            p.add_argument("--checkpoint", type=str, required=True)
            p.add_argument("--baseline-checkpoint", type=str, default=None)
            p.add_argument("--semi-supervised", action="store_true", dest="semi_supervised",
                           help="also finetune on class-balanced label fractions")
            p.add_argument("--dump-features", type=str, default=None, dest="dump_features",
                           help="directory for per-block feature tables (npz)")
            p.add_argument("--out", type=str, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="render partition or probe-report tables")
    p.add_argument("--probe-report", type=str, default=None)
    p.add_argument("--checkpoint", type=str, default=None)
    p.add_argument("--stage-width", type=int, default=3)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fetch", help="download and checksum-verify a dataset archive")
    p.add_argument("name", choices=sorted({"cifar10", "stl10"}))
    p.add_argument("--root", type=str, default="data")
    p.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StagewiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
