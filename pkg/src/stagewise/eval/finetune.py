"""Semi-supervised finetuning of the whole pretrained network."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from stagewise.engine.data import ArrayDataset
from stagewise.model.backbone import StagedBackbone
from stagewise.model.heads import HeadConfig, build_head
from stagewise.seeding import STREAM_FINETUNE, rng_for


@dataclass(frozen=True)
class FinetuneSchedule:
    epochs: int = 10
    base_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("finetune schedule needs non-negative epochs and positive batch size")
        if self.base_lr < 0:
            raise ValueError("finetune learning rate must be non-negative")


def _topk_accuracy(logits: torch.Tensor, labels: torch.Tensor, k: int) -> float:
    k = min(k, logits.shape[1])
    topk = logits.topk(k, dim=1).indices
    return float((topk == labels[:, None]).any(dim=1).float().mean())


def semi_supervised_finetune(
    model: StagedBackbone,
    train_dataset: ArrayDataset,
    subset_indices: np.ndarray,
    eval_dataset: ArrayDataset,
    schedule: FinetuneSchedule = FinetuneSchedule(),
) -> dict[str, float]:
    """Attach a fresh classifier head and finetune all parameters on the subset.

    The model is modified in place. Returns held-out top-1/top-5 accuracy.
    """
    subset = train_dataset.subset(np.asarray(subset_indices))
    if train_dataset.num_classes != eval_dataset.num_classes:
        raise ValueError("train/eval datasets disagree on class count")
    head = build_head(
        HeadConfig(
            kind="linear-classifier",
            in_features=model.config.blocks[-1].width,
            out_dim=train_dataset.num_classes,
        ),
        seed=schedule.seed,
    )
    model.train()
    head.train()
    params = list(model.parameters()) + list(head.parameters())
    for p in params:
        p.requires_grad_(True)
    optimizer = torch.optim.SGD(
        params, lr=schedule.base_lr, momentum=schedule.momentum,
        weight_decay=schedule.weight_decay,
    )

    n = len(subset)
    for epoch in range(schedule.epochs):
        lr = schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / max(schedule.epochs, 1)))
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng_for(schedule.seed, STREAM_FINETUNE, epoch).permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            x = torch.from_numpy(subset.images[idx])
            y = torch.from_numpy(subset.labels[idx])
            logits = head(model(x))
            loss = torch.nn.functional.cross_entropy(logits, y)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    model.eval()
    head.eval()
    logits_chunks = []
    with torch.no_grad():
        for start in range(0, len(eval_dataset), 256):
            x = torch.from_numpy(eval_dataset.images[start : start + 256])
            logits_chunks.append(head(model(x)))
    logits = torch.cat(logits_chunks)
    labels = torch.from_numpy(eval_dataset.labels)
    return {
        "top1": _topk_accuracy(logits, labels, 1),
        "top5": _topk_accuracy(logits, labels, 5),
        "subset_size": float(n),
    }
