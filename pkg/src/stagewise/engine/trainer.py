"""Stage-wise training loop.

Stages run strictly in order. For each minibatch of stage i: task-specific
preprocessing for the stage's level, forward through blocks up to the end of
the stage window (blocks below the window in inference behavior unless the
mode lifts the gradient restriction), projection head, stage loss, and an
optimizer step that touches only the stage's trainable parameter groups.
Heads are freshly initialized per stage and discarded when the stage ends;
checkpoints are written at stage boundaries and support resuming.
"""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import numpy as np
import torch

from stagewise.engine.data import ArrayDataset, preprocess_batch
from stagewise.engine.plan import TrainPlan, stage_level
from stagewise.engine.schedule import lr_at
from stagewise.errors import StagewiseError
from stagewise.model.backbone import StagedBackbone, build_backbone
from stagewise.model.checkpoint import check_compatible, load_checkpoint, save_checkpoint
from stagewise.model.heads import CONTRASTIVE_EMBED_DIM, HeadConfig, PooledHead, build_head
from stagewise.model.losses import cross_entropy, nt_xent
from stagewise.partition import TrainingMode, forward_prefix, trainable_set
from stagewise.seeding import STREAM_SHUFFLE, rng_for, seed_sequence
from stagewise.tasks.levels import TaskLevelSpec

_TIMING_FIELDS = ("wall_ms", "timestamp")


class TrainLog:
    """Append-only run log; one JSON-serializable record per step or summary."""

    def __init__(self, records: list[dict] | None = None):
        self.records: list[dict] = list(records or [])

    def append(self, record: dict) -> None:
        self.records.append(record)

    def step_records(self) -> list[dict]:
        return [r for r in self.records if r.get("kind") == "step"]

    def loss_sequence(self) -> list[float]:
        return [r["loss"] for r in self.step_records()]

    def stage_sequence(self) -> list[int]:
        return [r["stage"] for r in self.step_records()]

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "TrainLog":
        with open(path, "r", encoding="ascii") as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    def equivalent(self, other: "TrainLog", ignore: tuple[str, ...] = _TIMING_FIELDS) -> bool:
        """Equality modulo wall-clock fields, which are not deterministic."""
        def strip(records):
            return [{k: v for k, v in r.items() if k not in ignore} for r in records]

        return strip(self.records) == strip(other.records)


def _head_config_for(level: TaskLevelSpec, in_features: int) -> HeadConfig:
    if level.family == "contrastive":
        return HeadConfig(
            kind="mlp-projection", in_features=in_features,
            out_dim=CONTRASTIVE_EMBED_DIM, hidden_dim=in_features,
        )
    return HeadConfig(kind="linear-classifier", in_features=in_features, out_dim=level.num_classes)


def stage_head(plan: TrainPlan, stage_index: int) -> PooledHead:
    """The freshly initialized head a stage starts from (deterministic per plan seed)."""
    stage = plan.partition.stages[stage_index - 1]
    level = stage_level(plan, stage_index)
    in_features = plan.backbone.blocks[stage.blocks[-1] - 1].width
    return build_head(
        _head_config_for(level, in_features),
        seed=int(seed_sequence(plan.seed, stage_index).generate_state(1)[0]),
    )


def _named_parameters_by_group(model: StagedBackbone, heads: dict[str, PooledHead]):
    groups: dict[str, list[tuple[str, torch.nn.Parameter]]] = {}
    for i, block in enumerate(model.blocks):
        gid = model.block_group_id(i + 1)
        groups[gid] = list(block.named_parameters())
    for head_id, head in heads.items():
        groups[head_id] = list(head.named_parameters())
    return groups


def _apply_gradient_mask(model: StagedBackbone, selector) -> None:
    """requires_grad and train/eval flags per block according to the selector."""
    for i, block in enumerate(model.blocks):
        included = model.block_group_id(i + 1) in selector
        block.requires_grad_(included)
        block.train(included)


def _optimizer_for(groups, selector, schedule) -> torch.optim.SGD:
    decay, no_decay = [], []
    for gid, named in groups.items():
        if gid not in selector:
            continue
        for name, param in named:
            if schedule.bias_decay_exempt and name.endswith(".bias"):
                no_decay.append(param)
            else:
                decay.append(param)
    return torch.optim.SGD(
        [
            {"params": decay, "weight_decay": schedule.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=schedule.base_lr,
        momentum=schedule.momentum,
    )


def train_stage(
    model: StagedBackbone,
    plan: TrainPlan,
    stage_index: int,
    dataset: ArrayDataset,
    *,
    log: TrainLog | None = None,
    step_offset: int = 0,
    heads_out: dict[str, PooledHead] | None = None,
    step_callback=None,
) -> StagedBackbone:
    """Train one stage on its bound task level; returns the updated model.

    The per-stage head is created here (seeded from plan seed and stage
    index) and dropped on return unless `heads_out` captures it. `step_offset`
    continues the global step counter across stages.
    """
    partition = plan.partition
    if not 1 <= stage_index <= partition.num_stages:
        raise ValueError(f"stage index {stage_index} outside [1, {partition.num_stages}]")
    level = stage_level(plan, stage_index)
    schedule = plan.schedules[stage_index - 1]
    stage = partition.stages[stage_index - 1]
    selector = trainable_set(partition, stage_index, plan.mode)
    train_prefix = plan.mode is TrainingMode.PSL_F

    head = stage_head(plan, stage_index)
    head.train()

    _apply_gradient_mask(model, selector)
    groups = _named_parameters_by_group(model, {stage.head_id: head})
    optimizer = _optimizer_for(groups, selector, schedule)

    if log is None:
        log = TrainLog()
    global_step = step_offset
    for epoch in range(schedule.epochs):
        lr = lr_at(schedule, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng_for(plan.seed, STREAM_SHUFFLE, stage_index, epoch).permutation(len(dataset))
        batches = [
            order[i : i + plan.batch_size] for i in range(0, len(order), plan.batch_size)
        ]
        if plan.family == "contrastive":
            batches = [b for b in batches if len(b) >= 2]
        if schedule.max_steps_per_epoch is not None:
            batches = batches[: schedule.max_steps_per_epoch]
        if not batches:
            raise StagewiseError(
                f"stage {stage_index} epoch {epoch}: no usable batches "
                f"(dataset size {len(dataset)}, batch size {plan.batch_size})"
            )
        for step, batch_indices in enumerate(batches):
            t0 = time.perf_counter()
            inputs, labels = preprocess_batch(
                plan.family, level, dataset, batch_indices,
                plan_seed=plan.seed, stage_index=stage_index, epoch=epoch,
                preprocess=plan.preprocess,
            )
            features = forward_prefix(model, partition, stage_index, inputs, train_prefix=train_prefix)
            outputs = head(features)
            if plan.family == "contrastive":
                loss = nt_xent(outputs, level.temperature)
            else:
                loss = cross_entropy(outputs, labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            global_step += 1
            record = {
                "kind": "step",
                "stage": stage_index,
                "epoch": epoch,
                "step": step,
                "global_step": global_step,
                "loss": float(loss.item()),
                "lr": lr,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
            log.append(record)
            if step_callback is not None:
                step_callback(model, head, record)

    epoch_losses: dict[int, list[float]] = {}
    for r in log.step_records():
        if r["stage"] == stage_index:
            epoch_losses.setdefault(r["epoch"], []).append(r["loss"])
    first_epoch = min(epoch_losses)
    last_epoch = max(epoch_losses)
    log.append(
        {
            "kind": "stage_summary",
            "stage": stage_index,
            "epochs": schedule.epochs,
            "level": level.level,
            "mean_loss_first_epoch": float(np.mean(epoch_losses[first_epoch])),
            "mean_loss_last_epoch": float(np.mean(epoch_losses[last_epoch])),
            "steps": sum(len(v) for v in epoch_losses.values()),
        }
    )
    if heads_out is not None:
        heads_out[stage.head_id] = head
    return model


def _env_record(plan: TrainPlan, config_hash: str | None) -> dict:
    return {
        "kind": "env",
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
        "seed": plan.seed,
        "mode": plan.mode.value,
        "family": plan.family,
        "batch_size": plan.batch_size,
        "stages": plan.partition.num_stages,
        "config_hash": config_hash,
    }


def run_plan(
    plan: TrainPlan,
    dataset: ArrayDataset,
    *,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    config_hash: str | None = None,
    step_callback=None,
    heads_out: dict[str, PooledHead] | None = None,
) -> tuple[StagedBackbone, TrainLog]:
    """Execute all stages in order; returns the trained backbone (heads discarded).

    A checkpoint is written at every stage boundary (`stage<i>.ckpt`) and at
    the end (`final.ckpt`). `resume_from` accepts any stage-boundary
    checkpoint; in deterministic mode the resumed run reproduces the
    uninterrupted run exactly.
    """
    log = TrainLog()
    log.append(_env_record(plan, config_hash))

    start_stage = 1
    step_offset = 0
    model, block_specs = build_backbone(plan.backbone, input_size=plan.input_size)
    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        check_compatible(payload, plan.backbone)
        for i, block in enumerate(model.blocks):
            block.load_state_dict(payload["blocks"][model.block_group_id(i + 1)])
        start_stage = int(payload["completed_stage"]) + 1
        step_offset = int(payload["step"])
        log.append({"kind": "resume", "completed_stage": payload["completed_stage"],
                    "step": step_offset})

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    num_stages = plan.partition.num_stages
    for stage_index in range(start_stage, num_stages + 1):
        try:
            train_stage(
                model, plan, stage_index, dataset,
                log=log, step_offset=step_offset,
                heads_out=heads_out, step_callback=step_callback,
            )
        except StagewiseError:
            raise
        except Exception as exc:
            raise StagewiseError(
                f"stage {stage_index} ({plan.family}, mode {plan.mode.value}) failed: {exc}"
            ) from exc
        step_offset = log.step_records()[-1]["global_step"] if log.step_records() else step_offset
        if out_path is not None:
            name = f"stage{stage_index}.ckpt" if stage_index < num_stages else "final.ckpt"
            save_checkpoint(
                out_path / name, model, plan.partition,
                input_size=plan.input_size, step=step_offset, completed_stage=stage_index,
                meta={"seed": plan.seed, "mode": plan.mode.value, "family": plan.family,
                      "config_hash": config_hash},
            )

    model.eval()
    return model, log
