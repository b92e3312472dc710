"""In-memory dataset container and per-stage pretext preprocessing.

Every stochastic draw in preprocessing comes from a generator derived from
(plan seed, stage, epoch, sample index), so batch content is a pure function
of the plan regardless of how preprocessing is parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from stagewise.seeding import STREAM_SAMPLE, rng_for
from stagewise.tasks.augment import make_contrastive_pair, resize_shorter_side
from stagewise.tasks.jigsaw import JigsawGeometry, make_jigsaw_sample
from stagewise.tasks.levels import TaskLevelSpec
from stagewise.tasks.rotation import make_rotation_sample


@dataclass
class ArrayDataset:
    """Images as float32 NCHW in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ValueError(f"expected NCHW images, got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must be one integer per image")
        if len(self) == 0:
            raise ValueError("dataset is empty")
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.images.shape[-1])

    @property
    def channels(self) -> int:
        return int(self.images.shape[1])

    def subset(self, indices: np.ndarray) -> "ArrayDataset":
        return ArrayDataset(
            images=self.images[indices], labels=self.labels[indices],
            num_classes=self.num_classes, name=self.name,
        )


@dataclass(frozen=True)
class PreprocessConfig:
    """Family-specific preprocessing knobs applied before the task generator."""

    resize_shorter: int | None = None  # jigsaw: upscale small images to fit the window
    jigsaw_geometry: JigsawGeometry | None = None
    jigsaw_flip_p: float = 0.5
    normalize_tiles: bool = True


def _center_square(image: np.ndarray) -> np.ndarray:
    _, h, w = image.shape
    if h == w:
        return image
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[:, top : top + side, left : left + side]


def preprocess_batch(
    family: str,
    level: TaskLevelSpec,
    dataset: ArrayDataset,
    indices: np.ndarray,
    *,
    plan_seed: int,
    stage_index: int,
    epoch: int,
    preprocess: PreprocessConfig,
) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Task-specific preprocessing for one minibatch.

    Classification families return (inputs, labels); the contrastive family
    returns interleaved positive-pair rows (2k, 2k+1) and no labels.
    """
    inputs = []
    labels = []
    for idx in indices:
        rng = rng_for(plan_seed, STREAM_SAMPLE, stage_index, epoch, int(idx))
        image = dataset.images[int(idx)]
        if family == "jigsaw":
            if preprocess.resize_shorter is not None:
                image = resize_shorter_side(image, preprocess.resize_shorter)
            sample = make_jigsaw_sample(
                image, level, rng,
                geometry=preprocess.jigsaw_geometry or JigsawGeometry(225, 3, 75, 64),
                flip_p=preprocess.jigsaw_flip_p,
                normalize_tiles=preprocess.normalize_tiles,
            )
            inputs.append(sample.input)
            labels.append(sample.label)
        elif family == "rotation":
            sample = make_rotation_sample(_center_square(image), level, rng)
            inputs.append(sample.input)
            labels.append(sample.label)
        elif family == "contrastive":
            view_a, view_b = make_contrastive_pair(image, level.payload, rng)
            inputs.append(view_a)
            inputs.append(view_b)
        else:
            raise ValueError(f"unknown task family {family!r}")
    batch = torch.from_numpy(np.stack(inputs))
    if family == "contrastive":
        return batch, None
    return batch, torch.from_numpy(np.asarray(labels, dtype=np.int64))
