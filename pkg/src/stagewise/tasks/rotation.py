"""Rotation-prediction pretext task with nested angle sets.

Level 1 = {0, 180}, level 2 adds {90, 270}, level 3 adds the 45-degree
family. Axis-aligned angles use exact pixel remapping; diagonal angles use
bilinear interpolation followed by an inscribed-square center crop (so no
out-of-frame fill pixels survive to leak the label) and a resize back to the
original side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from stagewise.tasks.augment import _require_chw, _to_chw, _to_hwc, resize_image
from stagewise.tasks.levels import PretextSample, TaskLevelSpec

LEVEL_ANGLES = {
    1: (0, 180),
    2: (0, 90, 180, 270),
    3: (0, 45, 90, 135, 180, 225, 270, 315),
}


@dataclass(frozen=True)
class RotationSet:
    """Ordered set of rotation angles in degrees, counter-clockwise."""

    angles_deg: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.angles_deg)) != len(self.angles_deg):
            raise ValueError("rotation angles must be distinct")
        if any(not 0 <= a < 360 for a in self.angles_deg):
            raise ValueError("rotation angles must lie in [0, 360)")
        if tuple(sorted(self.angles_deg)) != self.angles_deg:
            raise ValueError("rotation angles must be sorted ascending")

    def __len__(self) -> int:
        return len(self.angles_deg)

    def includes(self, other: "RotationSet") -> bool:
        return set(other.angles_deg).issubset(set(self.angles_deg))


def rotation_set(level: int) -> RotationSet:
    if level not in LEVEL_ANGLES:
        raise ValueError(f"rotation level must be 1, 2 or 3, got {level}")
    return RotationSet(angles_deg=LEVEL_ANGLES[level])


def _inscribed_side(side: int, angle_deg: float) -> int:
    """Side of the largest axis-aligned square fully inside a rotated square image."""
    theta = math.radians(angle_deg % 90.0)
    raw = side / (math.sin(theta) + math.cos(theta))
    # 1px guard keeps bilinear taps away from fill-blended border pixels.
    return max(1, int(math.floor(raw)) - 1)


def rotate_image(image: np.ndarray, angle_deg: int) -> np.ndarray:
    """Counter-clockwise rotation of a CHW image, preserving its resolution.

    Multiples of 90 degrees are exact remaps. Other angles require a square
    image and go through bilinear warp + inscribed-square crop + resize.
    """
    image = _require_chw(image)
    angle = angle_deg % 360
    if angle % 90 == 0:
        return np.ascontiguousarray(np.rot90(image, k=angle // 90, axes=(1, 2)))
    _, h, w = image.shape
    if h != w:
        raise ValueError(f"diagonal-angle rotation requires a square image, got {h}x{w}")
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    matrix = cv2.getRotationMatrix2D(center, angle, 1.0)
    rotated = cv2.warpAffine(
        _to_hwc(image), matrix, (w, h), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
    )
    rotated = _to_chw(rotated)
    side = _inscribed_side(h, angle)
    top = (h - side) // 2
    left = (w - side) // 2
    cropped = rotated[:, top : top + side, left : left + side]
    return resize_image(cropped, h, w)


def make_rotation_sample(
    image: np.ndarray,
    level_spec: TaskLevelSpec,
    rng: np.random.Generator,
    *,
    angle_index: int | None = None,
) -> PretextSample:
    """Rotate by an angle drawn uniformly from the level's set; label = angle index."""
    if level_spec.family != "rotation":
        raise ValueError(f"expected a rotation level spec, got family {level_spec.family!r}")
    angles = level_spec.payload.angles_deg
    if angle_index is None:
        angle_index = int(rng.integers(len(angles)))
    elif not 0 <= angle_index < len(angles):
        raise ValueError(f"angle index {angle_index} not in level-{level_spec.level} set of {len(angles)}")
    rotated = rotate_image(image, angles[angle_index])
    return PretextSample(
        input=rotated,
        label=angle_index,
        meta={"angle_deg": angles[angle_index], "level": level_spec.level},
    )
