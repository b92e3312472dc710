"""Frozen-backbone feature extraction per block."""

from __future__ import annotations

import numpy as np
import torch

from stagewise.engine.data import ArrayDataset
from stagewise.model.backbone import StagedBackbone
from stagewise.partition import StagePartition


def extract_block_features(
    model: StagedBackbone,
    partition: StagePartition,
    block_name: str,
    dataset: ArrayDataset,
    *,
    batch_size: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Global-average-pooled features from the named block's output.

    Runs in inference behavior (eval mode, no gradients); deterministic for a
    fixed checkpoint. Returns (features [N, C_block], labels [N]).
    """
    spec = partition.block_by_name(block_name)
    was_training = model.training
    model.eval()
    chunks = []
    try:
        with torch.no_grad():
            for start in range(0, len(dataset), batch_size):
                batch = torch.from_numpy(dataset.images[start : start + batch_size])
                h = batch
                for i in range(spec.index):
                    h = model.blocks[i](h)
                chunks.append(h.mean(dim=(2, 3)).numpy())
    finally:
        model.train(was_training)
    features = np.concatenate(chunks, axis=0).astype(np.float32)
    return features, dataset.labels.copy()
