"""Task-level specifications binding a family, difficulty level, and loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

TASK_FAMILIES = ("jigsaw", "rotation", "contrastive")

DEFAULT_NT_XENT_TEMPERATURE = 0.5


@dataclass(frozen=True)
class TaskLevelSpec:
    """One difficulty level of a multi-level task family.

    payload: PermutationSet (jigsaw), RotationSet (rotation), or
    AugmentationPipeline (contrastive). num_classes matches the payload
    cardinality for classification families and is None for contrastive.
    """

    family: str
    level: int
    payload: Any
    num_classes: int | None
    loss_kind: str  # "cross_entropy" | "nt_xent"
    temperature: float | None = None

    def __post_init__(self) -> None:
        if self.family not in TASK_FAMILIES:
            raise ValueError(f"unknown task family {self.family!r}")
        if self.level not in (1, 2, 3):
            raise ValueError(f"task level must be 1, 2 or 3, got {self.level}")
        if self.family == "contrastive":
            if self.loss_kind != "nt_xent" or self.num_classes is not None:
                raise ValueError("contrastive levels use nt_xent loss and have no classes")
            if self.temperature is None or self.temperature <= 0:
                raise ValueError("contrastive levels need a positive temperature")
        else:
            if self.loss_kind != "cross_entropy":
                raise ValueError(f"{self.family} levels use cross_entropy loss")
            if self.num_classes != len(self.payload):
                raise ValueError(
                    f"num_classes {self.num_classes} does not match payload cardinality "
                    f"{len(self.payload)}"
                )


@dataclass
class PretextSample:
    """One training example produced by a task generator."""

    input: np.ndarray  # jigsaw: [grid^2*C, tile, tile]; rotation/contrastive: [C, H, W]
    label: int
    meta: dict = field(default_factory=dict)


def jigsaw_levels(base_set, cardinalities=(500, 1000, 2000)) -> list[TaskLevelSpec]:
    """Nested jigsaw levels from prefix subsets of one base permutation set."""
    from stagewise.tasks.permutations import nest_levels

    subsets = nest_levels(base_set, cardinalities)
    return [
        TaskLevelSpec(family="jigsaw", level=i + 1, payload=s, num_classes=len(s), loss_kind="cross_entropy")
        for i, s in enumerate(subsets)
    ]


def rotation_levels() -> list[TaskLevelSpec]:
    from stagewise.tasks.rotation import rotation_set

    return [
        TaskLevelSpec(
            family="rotation", level=lv, payload=rotation_set(lv),
            num_classes=len(rotation_set(lv)), loss_kind="cross_entropy",
        )
        for lv in (1, 2, 3)
    ]


def contrastive_levels(
    out_size: int = 224,
    *,
    strength: float = 1.0,
    temperature: float = DEFAULT_NT_XENT_TEMPERATURE,
    crop_scale: tuple[float, float] = (0.2, 1.0),
    blur_kernel: int | None = None,
) -> list[TaskLevelSpec]:
    from stagewise.tasks.augment import contrastive_pipeline

    return [
        TaskLevelSpec(
            family="contrastive", level=lv,
            payload=contrastive_pipeline(lv, out_size, strength=strength,
                                         crop_scale=crop_scale, blur_kernel=blur_kernel),
            num_classes=None, loss_kind="nt_xent", temperature=temperature,
        )
        for lv in (1, 2, 3)
    ]
