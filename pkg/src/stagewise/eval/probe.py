"""Linear probes on frozen features.

One fixed probe schedule (30-epoch affine classifier with cosine decay) is
used for every block and every method, so probe comparisons differ only in
the features. Features are standardized with statistics fit on the training
split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from stagewise.seeding import STREAM_PROBE, rng_for, torch_seed_for


@dataclass(frozen=True)
class ProbeSchedule:
    epochs: int = 30
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 256
    seed: int = 0
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("probe schedule needs positive epochs and batch size")
        if self.base_lr <= 0:
            raise ValueError("probe learning rate must be positive")


def _cosine_lr(schedule: ProbeSchedule, epoch: int) -> float:
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / schedule.epochs))


def linear_probe(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    eval_features: np.ndarray,
    eval_labels: np.ndarray,
    schedule: ProbeSchedule = ProbeSchedule(),
) -> float:
    """Train a single affine classifier on frozen features; held-out top-1 accuracy."""
    classes = np.unique(train_labels)
    if classes.size < 2:
        raise ValueError(f"degenerate probe: only {classes.size} distinct label(s)")
    num_classes = int(train_labels.max()) + 1

    train_x = np.asarray(train_features, dtype=np.float32)
    eval_x = np.asarray(eval_features, dtype=np.float32)
    if schedule.standardize:
        mean = train_x.mean(axis=0, keepdims=True)
        std = train_x.std(axis=0, keepdims=True) + 1e-6
        train_x = (train_x - mean) / std
        eval_x = (eval_x - mean) / std

    x = torch.from_numpy(train_x)
    y = torch.from_numpy(np.asarray(train_labels, dtype=np.int64))
    classifier = torch.nn.Linear(x.shape[1], num_classes)
    gen = torch.Generator().manual_seed(torch_seed_for(schedule.seed, STREAM_PROBE))
    with torch.no_grad():
        bound = 1.0 / math.sqrt(x.shape[1])
        classifier.weight.uniform_(-bound, bound, generator=gen)
        classifier.bias.zero_()
    optimizer = torch.optim.SGD(
        classifier.parameters(), lr=schedule.base_lr,
        momentum=schedule.momentum, weight_decay=schedule.weight_decay,
    )

    n = x.shape[0]
    for epoch in range(schedule.epochs):
        lr = _cosine_lr(schedule, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng_for(schedule.seed, STREAM_PROBE, epoch).permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            logits = classifier(x[idx])
            loss = torch.nn.functional.cross_entropy(logits, y[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    with torch.no_grad():
        predictions = classifier(torch.from_numpy(eval_x)).argmax(dim=1).numpy()
    return float((predictions == np.asarray(eval_labels)).mean())


@dataclass
class ProbeReport:
    """Per-block probe accuracies plus random-init baselines and run metadata."""

    protocol: str  # "frozen-linear" | "finetune"
    dataset_id: str
    checkpoint_id: str
    block_accuracies: dict[str, float]
    baseline_accuracies: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, acc in {**self.block_accuracies, **self.baseline_accuracies}.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy for {name} outside [0, 1]: {acc}")

    def best_block(self) -> tuple[str, float]:
        name = max(self.block_accuracies, key=self.block_accuracies.get)
        return name, self.block_accuracies[name]

    def to_json(self) -> str:
        return json.dumps(
            {
                "protocol": self.protocol,
                "dataset_id": self.dataset_id,
                "checkpoint_id": self.checkpoint_id,
                "block_accuracies": self.block_accuracies,
                "baseline_accuracies": self.baseline_accuracies,
                "meta": self.meta,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ProbeReport":
        raw = json.loads(text)
        return cls(
            protocol=raw["protocol"],
            dataset_id=raw["dataset_id"],
            checkpoint_id=raw["checkpoint_id"],
            block_accuracies=raw["block_accuracies"],
            baseline_accuracies=raw.get("baseline_accuracies", {}),
            meta=raw.get("meta", {}),
        )

    def render_table(self) -> str:
        blocks = sorted(self.block_accuracies)
        header = f"{'':<12}" + "".join(f"{b:>8}" for b in blocks)
        probe_row = f"{'probe':<12}" + "".join(f"{self.block_accuracies[b]*100:>8.1f}" for b in blocks)
        lines = [header, probe_row]
        if self.baseline_accuracies:
            base_row = f"{'random-init':<12}" + "".join(
                f"{self.baseline_accuracies.get(b, float('nan'))*100:>8.1f}" for b in blocks
            )
            lines.append(base_row)
        return "\n".join(lines)
