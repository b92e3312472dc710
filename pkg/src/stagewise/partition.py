"""Block-structured backbone partitioning into overlapping learning stages.

Blocks are maximal layer groups sharing one feature-map resolution. A stage is
a sliding window of `width` consecutive blocks (default 3), so adjacent stages
overlap in width-1 blocks; overlap blocks are trained by more than one stage
and carry information between stages. Each stage owns one projection head.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch


class TrainingMode(str, Enum):
    """Update policies for one stage's loss.

    PSL: gradients confined to the stage window (plus its head); each stage
    trains its own task level. SL: same confinement, hardest level everywhere.
    PSL_F: stage losses update all layers on the forward path. E2E: single
    full-network stage on the hardest level.
    """

    PSL = "psl"
    SL = "sl"
    PSL_F = "psl_f"
    E2E = "e2e"


@dataclass(frozen=True)
class BlockSpec:
    index: int  # 1-based
    name: str  # B1..Bn
    output_resolution: int  # spatial side after the block
    param_group_id: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("block index is 1-based")
        if self.output_resolution < 1:
            raise ValueError(f"{self.name}: output resolution must be positive")


@dataclass(frozen=True)
class Stage:
    index: int  # 1-based
    blocks: tuple[int, ...]  # contiguous 1-based block indices
    head_id: str

    def __post_init__(self) -> None:
        if list(self.blocks) != list(range(self.blocks[0], self.blocks[0] + len(self.blocks))):
            raise ValueError(f"stage {self.index} block window must be contiguous, got {self.blocks}")


@dataclass(frozen=True)
class StagePartition:
    blocks: tuple[BlockSpec, ...]
    stages: tuple[Stage, ...]
    width: int

    def __post_init__(self) -> None:
        resolutions = [b.output_resolution for b in self.blocks]
        if any(b > a for a, b in zip(resolutions, resolutions[1:])):
            raise ValueError(f"block resolutions must be non-increasing, got {resolutions}")
        if [b.index for b in self.blocks] != list(range(1, len(self.blocks) + 1)):
            raise ValueError("blocks must be numbered 1..n in order")

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def block_by_name(self, name: str) -> BlockSpec:
        for b in self.blocks:
            if b.name == name:
                return b
        raise ValueError(f"unknown block {name!r}; have {[b.name for b in self.blocks]}")

    def stages_containing(self, block_index: int) -> list[int]:
        return [s.index for s in self.stages if block_index in s.blocks]

    def summary(self) -> dict:
        return {
            "width": self.width,
            "blocks": [
                {
                    "index": b.index,
                    "name": b.name,
                    "output_resolution": b.output_resolution,
                    "param_group_id": b.param_group_id,
                }
                for b in self.blocks
            ],
            "stages": [
                {"index": s.index, "blocks": list(s.blocks), "head_id": s.head_id} for s in self.stages
            ],
        }


@dataclass(frozen=True)
class ParamSelector:
    """Parameter groups a stage's optimizer may update (stage blocks plus its head)."""

    included_param_groups: frozenset[str]

    def __contains__(self, group_id: str) -> bool:
        return group_id in self.included_param_groups


def make_stages(blocks: list[BlockSpec] | tuple[BlockSpec, ...], width: int) -> StagePartition:
    """Sliding-window stages over an ordered block list."""
    blocks = tuple(blocks)
    if not 1 <= width <= len(blocks):
        raise ValueError(f"stage width {width} outside [1, {len(blocks)}]")
    stages = tuple(
        Stage(index=i + 1, blocks=tuple(range(i + 1, i + 1 + width)), head_id=f"head{i + 1}")
        for i in range(len(blocks) - width + 1)
    )
    return StagePartition(blocks=blocks, stages=stages, width=width)


def trainable_set(partition: StagePartition, stage_index: int, mode: TrainingMode | str) -> ParamSelector:
    """Parameter groups updated while training the given stage.

    PSL/SL/E2E confine updates to the stage window; PSL_F includes every
    block. Blocks outside the forward path never receive gradients either
    way, so for stage 1 the effective PSL and PSL_F updates coincide.
    """
    mode = TrainingMode(mode)
    if not 1 <= stage_index <= partition.num_stages:
        raise ValueError(f"stage index {stage_index} outside [1, {partition.num_stages}]")
    stage = partition.stages[stage_index - 1]
    if mode is TrainingMode.PSL_F:
        block_groups = [b.param_group_id for b in partition.blocks]
    else:
        block_groups = [partition.blocks[i - 1].param_group_id for i in stage.blocks]
    return ParamSelector(included_param_groups=frozenset(block_groups + [stage.head_id]))


def forward_prefix(
    model: torch.nn.Module,
    partition: StagePartition,
    stage_index: int,
    batch: torch.Tensor,
    *,
    train_prefix: bool = False,
) -> torch.Tensor:
    """Forward through blocks B1..(last block of the stage window).

    With train_prefix False, blocks below the window run in inference
    behavior: no normalization-statistic updates and no gradient recording.
    Module training flags are restored before returning.
    """
    if not 1 <= stage_index <= partition.num_stages:
        raise ValueError(f"stage index {stage_index} outside [1, {partition.num_stages}]")
    blocks = model.blocks
    if len(blocks) != partition.num_blocks:
        raise ValueError(
            f"model has {len(blocks)} blocks but partition describes {partition.num_blocks}"
        )
    stage = partition.stages[stage_index - 1]
    first, last = stage.blocks[0], stage.blocks[-1]

    h = batch
    prefix = [blocks[i] for i in range(first - 1)]
    if prefix and not train_prefix:
        saved = [m.training for m in prefix]
        try:
            with torch.no_grad():
                for m in prefix:
                    m.eval()
                    h = m(h)
        finally:
            for m, flag in zip(prefix, saved):
                m.train(flag)
    else:
        for m in prefix:
            h = m(h)
    for i in range(first - 1, last):
        h = blocks[i](h)
    return h


def partition_table(partition: StagePartition) -> str:
    """Plain-text table: block, resolution, and the stages containing it."""
    lines = [f"{'block':<8}{'resolution':<12}stages"]
    for b in partition.blocks:
        stages = ", ".join(f"S{i}" for i in partition.stages_containing(b.index)) or "-"
        lines.append(f"{b.name:<8}{b.output_resolution:<12}{stages}")
    return "\n".join(lines)
