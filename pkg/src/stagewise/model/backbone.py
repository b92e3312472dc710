"""Small configurable residual block backbone.

Desk-scale substitute for the large block networks used at ImageNet scale:
five blocks with widths {16, 32, 64, 128, 256} by default, each block a
maximal group of layers at one feature-map resolution. The partition logic is
identical to the full-scale setting; the capacity is not.

Initialization never touches global RNG: every parameter is drawn from a
dedicated torch.Generator seeded from the config seed, so identical configs
give bit-identical models regardless of surrounding code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from stagewise.partition import BlockSpec
from stagewise.seeding import STREAM_INIT, torch_seed_for

DEFAULT_WIDTHS = (16, 32, 64, 128, 256)


@dataclass(frozen=True)
class BlockConfig:
    units: int  # residual units after the transition conv
    width: int
    downsample: bool

    def __post_init__(self) -> None:
        if self.units < 0:
            raise ValueError("unit count must be non-negative")
        if self.width < 1:
            raise ValueError("block width must be positive")


@dataclass(frozen=True)
class BackboneConfig:
    input_channels: int = 3
    stem_width: int = 16
    blocks: tuple[BlockConfig, ...] = field(
        default_factory=lambda: tuple(
            BlockConfig(units=1, width=w, downsample=(i > 0)) for i, w in enumerate(DEFAULT_WIDTHS)
        )
    )
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_channels < 1:
            raise ValueError("input_channels must be positive")
        if not self.blocks:
            raise ValueError("need at least one block")
        if self.stem_width != self.blocks[0].width:
            raise ValueError(
                f"inconsistent configuration: stem width {self.stem_width} must equal the "
                f"first block width {self.blocks[0].width}"
            )

    def with_input_channels(self, channels: int) -> "BackboneConfig":
        return BackboneConfig(
            input_channels=channels, stem_width=self.stem_width, blocks=self.blocks, seed=self.seed
        )


class ResidualUnit(nn.Module):
    """Basic two-conv residual unit at constant width."""

    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)

    def forward(self, x):
        h = torch.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return torch.relu(x + h)


class BackboneBlock(nn.Module):
    """Transition conv (optionally stride-2) plus residual units at one resolution."""

    def __init__(self, in_width: int, cfg: BlockConfig):
        super().__init__()
        stride = 2 if cfg.downsample else 1
        self.transition = nn.Conv2d(in_width, cfg.width, 3, stride=stride, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(cfg.width)
        self.units = nn.Sequential(*[ResidualUnit(cfg.width) for _ in range(cfg.units)])

    def forward(self, x):
        h = torch.relu(self.bn(self.transition(x)))
        return self.units(h)


class StagedBackbone(nn.Module):
    """Chain of BackboneBlocks; block i maps to parameter group "block{i+1}"."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        blocks = []
        in_width = config.input_channels
        for cfg in config.blocks:
            blocks.append(BackboneBlock(in_width, cfg))
            in_width = cfg.width
        self.blocks = nn.ModuleList(blocks)
        self.config = config

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x

    def block_group_id(self, block_index: int) -> str:
        return f"block{block_index}"

    def block_module(self, block_index: int) -> nn.Module:
        return self.blocks[block_index - 1]


def init_module(module: nn.Module, generator: torch.Generator) -> None:
    """Deterministic in-place init: He-normal convs, unit BN, uniform linear."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_out = m.out_channels * m.kernel_size[0] * m.kernel_size[1]
            with torch.no_grad():
                m.weight.normal_(0.0, math.sqrt(2.0 / fan_out), generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
        elif isinstance(m, nn.Linear):
            bound = 1.0 / math.sqrt(m.in_features)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=generator)


def build_backbone(config: BackboneConfig, input_size: int = 32) -> tuple[StagedBackbone, list[BlockSpec]]:
    """Construct and deterministically initialize the backbone.

    Returns the model and the BlockSpec list; output resolutions come from a
    dry forward pass at the given input size, so they are consistent with the
    actual feature maps by construction.
    """
    if input_size < 1:
        raise ValueError("input size must be positive")
    model = StagedBackbone(config)
    gen = torch.Generator().manual_seed(torch_seed_for(config.seed, STREAM_INIT))
    init_module(model, gen)

    specs: list[BlockSpec] = []
    model.eval()
    with torch.no_grad():
        h = torch.zeros(1, config.input_channels, input_size, input_size)
        for i, block in enumerate(model.blocks):
            h = block(h)
            if h.shape[-1] < 1:
                raise ValueError(
                    f"inconsistent configuration: block {i + 1} collapses the feature map "
                    f"to zero size at input {input_size}"
                )
            specs.append(
                BlockSpec(
                    index=i + 1,
                    name=f"B{i + 1}",
                    output_resolution=int(h.shape[-1]),
                    param_group_id=f"block{i + 1}",
                )
            )
    model.train()
    return model, specs
