"""Per-stage projection heads.

Classification pretexts (jigsaw, rotation) get a pooled affine classifier;
the contrastive task gets a pooled 2-layer MLP projecting to a 128-d space.
Heads are trained with their stage and discarded afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from stagewise.model.backbone import init_module
from stagewise.seeding import STREAM_HEAD, torch_seed_for

HEAD_KINDS = ("linear-classifier", "mlp-projection")

CONTRASTIVE_EMBED_DIM = 128


@dataclass(frozen=True)
class HeadConfig:
    kind: str
    in_features: int
    out_dim: int
    hidden_dim: int | None = None  # mlp only
    pooling: str = "global-average"

    def __post_init__(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.in_features < 1 or self.out_dim < 1:
            raise ValueError("head dimensions must be positive")
        if self.kind == "mlp-projection" and (self.hidden_dim is None or self.hidden_dim < 1):
            raise ValueError("mlp-projection head needs a positive hidden_dim")
        if self.kind == "linear-classifier" and self.hidden_dim is not None:
            raise ValueError("linear-classifier head takes no hidden_dim")
        if self.pooling != "global-average":
            raise ValueError(f"unsupported pooling {self.pooling!r}")


class PooledHead(nn.Module):
    """Global-average pooling followed by an affine map (optionally one hidden layer)."""

    def __init__(self, config: HeadConfig):
        super().__init__()
        self.config = config
        if config.kind == "linear-classifier":
            self.net = nn.Linear(config.in_features, config.out_dim)
        else:
            self.net = nn.Sequential(
                nn.Linear(config.in_features, config.hidden_dim),
                nn.ReLU(inplace=True),
                nn.Linear(config.hidden_dim, config.out_dim),
            )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.ndim != 4:
            raise ValueError(f"expected NCHW features, got shape {tuple(features.shape)}")
        if features.shape[1] != self.config.in_features:
            raise ValueError(
                f"head/feature dimension mismatch: head expects {self.config.in_features} "
                f"channels, got {features.shape[1]}"
            )
        pooled = features.mean(dim=(2, 3))
        return self.net(pooled)


def build_head(config: HeadConfig, seed: int) -> PooledHead:
    head = PooledHead(config)
    init_module(head, torch.Generator().manual_seed(torch_seed_for(seed, STREAM_HEAD)))
    return head
