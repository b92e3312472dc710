"""Backbone, projection heads, losses, and checkpoint container."""

from stagewise.model.backbone import BackboneConfig, BlockConfig, StagedBackbone, build_backbone
from stagewise.model.checkpoint import (
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
    architecture_fingerprint,
    load_checkpoint,
    restore_backbone,
    save_checkpoint,
)
from stagewise.model.heads import HeadConfig, build_head
from stagewise.model.losses import cross_entropy, nt_xent

__all__ = [
    "BackboneConfig",
    "BlockConfig",
    "StagedBackbone",
    "build_backbone",
    "HeadConfig",
    "build_head",
    "cross_entropy",
    "nt_xent",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "restore_backbone",
    "architecture_fingerprint",
]
