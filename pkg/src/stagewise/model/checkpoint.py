"""Versioned checkpoint container.

A checkpoint is a torch.save archive of plain types and tensors:

    {
      "format": "stagewise-checkpoint",
      "version": 1,
      "backbone_config": {...},            # dataclass fields, nested dicts
      "input_size": int,
      "partition": {...},                  # StagePartition.summary()
      "step": int,                         # monotonically increasing global step
      "completed_stage": int,              # 0 for a fresh model
      "blocks": {"block1": state_dict, ...},
      "heads": {"head1": state_dict, ...}, # empty in final exports
      "meta": {...},                       # run id, seed, config hash, ...
    }

Stage-boundary checkpoints and the final export carry no head parameters;
heads are per-stage and discarded after training.
"""

from __future__ import annotations

from dataclasses import asdict
from typing import Any

import torch

from stagewise.errors import CheckpointMismatchError
from stagewise.model.backbone import BackboneConfig, BlockConfig, StagedBackbone, build_backbone
from stagewise.partition import StagePartition

CHECKPOINT_FORMAT = "stagewise-checkpoint"
CHECKPOINT_VERSION = 1


def architecture_fingerprint(config: BackboneConfig) -> dict:
    """Plain-dict description of the backbone architecture (init seed excluded)."""
    fp = asdict(config)
    fp.pop("seed")
    fp["blocks"] = [asdict(b) if not isinstance(b, dict) else b for b in config.blocks]
    return fp


def _fingerprint_diff(expected: dict, found: dict) -> str:
    lines = []
    for key in sorted(set(expected) | set(found)):
        a, b = expected.get(key), found.get(key)
        if a != b:
            lines.append(f"  {key}: expected {a!r}, found {b!r}")
    return "\n".join(lines) or "  (no field-level difference)"


def collect_block_states(model: StagedBackbone) -> dict[str, dict[str, torch.Tensor]]:
    return {
        model.block_group_id(i + 1): {k: v.detach().clone() for k, v in block.state_dict().items()}
        for i, block in enumerate(model.blocks)
    }


def save_checkpoint(
    path,
    model: StagedBackbone,
    partition: StagePartition,
    *,
    input_size: int,
    step: int,
    completed_stage: int,
    heads: dict[str, torch.nn.Module] | None = None,
    meta: dict[str, Any] | None = None,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "backbone_config": asdict(model.config),
        "input_size": int(input_size),
        "partition": partition.summary(),
        "step": int(step),
        "completed_stage": int(completed_stage),
        "blocks": collect_block_states(model),
        "heads": {
            head_id: {k: v.detach().clone() for k, v in head.state_dict().items()}
            for head_id, head in (heads or {}).items()
        },
        "meta": dict(meta or {}),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatchError(f"{path}: not a {CHECKPOINT_FORMAT} archive")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"{path}: checkpoint version {payload.get('version')} != supported {CHECKPOINT_VERSION}"
        )
    return payload


def backbone_config_from_payload(payload: dict) -> BackboneConfig:
    raw = payload["backbone_config"]
    blocks = tuple(BlockConfig(**b) for b in raw["blocks"])
    return BackboneConfig(
        input_channels=raw["input_channels"],
        stem_width=raw["stem_width"],
        blocks=blocks,
        seed=raw["seed"],
    )


def check_compatible(payload: dict, config: BackboneConfig) -> None:
    """Raise with an explicit fingerprint diff when architectures disagree."""
    found = architecture_fingerprint(backbone_config_from_payload(payload))
    expected = architecture_fingerprint(config)
    if found != expected:
        raise CheckpointMismatchError(
            "checkpoint architecture does not match the requested configuration:\n"
            + _fingerprint_diff(expected, found)
        )


def restore_backbone(payload: dict, config: BackboneConfig | None = None):
    """Rebuild the backbone described by a checkpoint and load its block states."""
    stored = backbone_config_from_payload(payload)
    if config is not None:
        check_compatible(payload, config)
    model, specs = build_backbone(stored, input_size=payload["input_size"])
    for i, block in enumerate(model.blocks):
        block.load_state_dict(payload["blocks"][model.block_group_id(i + 1)])
    return model, specs
