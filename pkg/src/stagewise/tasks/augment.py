"""Augmentation primitives and multi-level contrastive view pipelines.

Images are float32 CHW arrays in [0, 1]. Every op is a pure function of
(descriptor, image, rng draws); all stochastic choices come from the generator
passed in, so a pipeline is reproducible from its seed alone.

Level sets nest: level 1 is random crop-resize only, level 2 adds color
distortion (with probabilistic grayscale), level 3 adds Gaussian blur and
Sobel filtering. Crop is always applied; the other ops gate on their
configured probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float32)
_SOBEL_Y = _SOBEL_X.T

# ITU-R 601 luma weights, the standard grayscale conversion.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def _require_chw(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3:
        raise ValueError(f"expected CHW image, got shape {image.shape}")
    return np.asarray(image, dtype=np.float32)


def _to_hwc(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(image, 0, -1))


def _to_chw(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        image = image[:, :, None]
    return np.ascontiguousarray(np.moveaxis(image, -1, 0))


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a CHW image; exact identity when the size is unchanged."""
    image = _require_chw(image)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate resize target ({out_h}, {out_w})")
    if (out_h, out_w) == image.shape[1:]:
        return image.copy()
    resized = cv2.resize(_to_hwc(image), (out_w, out_h), interpolation=cv2.INTER_LINEAR)
    return _to_chw(resized)


def resize_shorter_side(image: np.ndarray, target: int) -> np.ndarray:
    """Scale so the shorter spatial side equals `target`, preserving aspect ratio."""
    image = _require_chw(image)
    _, h, w = image.shape
    if target < 1:
        raise ValueError(f"target side must be positive, got {target}")
    if min(h, w) == target:
        return image
    scale = target / min(h, w)
    return resize_image(image, max(target, round(h * scale)), max(target, round(w * scale)))


# ---------------------------------------------------------------------------
# Op descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CropResize:
    """Random area/aspect crop followed by bilinear resize to a square."""

    out_size: int = 224
    scale_range: tuple[float, float] = (0.2, 1.0)
    ratio_range: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.out_size < 1:
            raise ValueError("out_size must be positive")
        if not 0.0 < self.scale_range[0] <= self.scale_range[1] <= 1.0:
            raise ValueError(f"degenerate crop scale range {self.scale_range}")
        if not 0.0 < self.ratio_range[0] <= self.ratio_range[1]:
            raise ValueError(f"degenerate crop ratio range {self.ratio_range}")


@dataclass(frozen=True)
class HorizontalFlip:
    p: float = 0.5


@dataclass(frozen=True)
class ColorDistortion:
    """SimCLR-style jitter: brightness/contrast/saturation 0.8*s, hue 0.2*s, plus grayscale."""

    strength: float = 1.0
    p: float = 0.8
    grayscale_p: float = 0.2

    def __post_init__(self) -> None:
        if self.strength <= 0:
            raise ValueError("color distortion strength must be positive")


@dataclass(frozen=True)
class GaussianBlur:
    sigma_range: tuple[float, float] = (0.1, 2.0)
    kernel_size: int | None = None  # odd; None -> ~10% of image side
    p: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.sigma_range[0] <= self.sigma_range[1]:
            raise ValueError(f"blur sigma range must be positive, got {self.sigma_range}")
        if self.kernel_size is not None and (self.kernel_size < 1 or self.kernel_size % 2 == 0):
            raise ValueError("blur kernel size must be a positive odd integer")


@dataclass(frozen=True)
class SobelFilter:
    p: float = 0.1


OpDescriptor = CropResize | HorizontalFlip | ColorDistortion | GaussianBlur | SobelFilter


@dataclass(frozen=True)
class AugmentationPipeline:
    """Ordered op set for one contrastive difficulty level."""

    ops: tuple[OpDescriptor, ...]
    level: int

    def __post_init__(self) -> None:
        if self.level not in (1, 2, 3):
            raise ValueError(f"pipeline level must be 1, 2 or 3, got {self.level}")

    def includes(self, other: "AugmentationPipeline") -> bool:
        """True when this pipeline's op set is a superset of the other's."""
        return set(other.ops).issubset(set(self.ops))


def contrastive_pipeline(
    level: int,
    out_size: int = 224,
    *,
    strength: float = 1.0,
    crop_scale: tuple[float, float] = (0.2, 1.0),
    blur_kernel: int | None = None,
) -> AugmentationPipeline:
    """Preset pipelines: level 1 crop; level 2 +color; level 3 +blur +sobel."""
    crop = CropResize(out_size=out_size, scale_range=crop_scale)
    ops: tuple[OpDescriptor, ...] = (crop,)
    if level >= 2:
        ops = ops + (ColorDistortion(strength=strength),)
    if level >= 3:
        ops = ops + (GaussianBlur(kernel_size=blur_kernel), SobelFilter())
    return AugmentationPipeline(ops=ops, level=level)


# ---------------------------------------------------------------------------
# Op application
# ---------------------------------------------------------------------------

def _grayscale(image: np.ndarray) -> np.ndarray:
    luma = np.tensordot(_LUMA, image, axes=([0], [0]))
    return np.repeat(luma[None, :, :], 3, axis=0)


def _adjust_brightness(image: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(image * factor, 0.0, 1.0)


def _adjust_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    mean = float(np.tensordot(_LUMA, image, axes=([0], [0])).mean())
    return np.clip((image - mean) * factor + mean, 0.0, 1.0)


def _adjust_saturation(image: np.ndarray, factor: float) -> np.ndarray:
    gray = _grayscale(image)
    return np.clip(gray + (image - gray) * factor, 0.0, 1.0)


def _adjust_hue(image: np.ndarray, shift: float) -> np.ndarray:
    hsv = cv2.cvtColor(_to_hwc(image), cv2.COLOR_RGB2HSV)
    hsv[:, :, 0] = (hsv[:, :, 0] + shift * 360.0) % 360.0
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(_to_chw(rgb), 0.0, 1.0)


def _apply_crop_resize(op: CropResize, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    _, h, w = image.shape
    area = h * w
    log_lo, log_hi = math.log(op.ratio_range[0]), math.log(op.ratio_range[1])
    crop_h, crop_w = h, w
    top, left = 0, 0
    for _ in range(10):
        target_area = area * rng.uniform(op.scale_range[0], op.scale_range[1])
        ratio = math.exp(rng.uniform(log_lo, log_hi))
        cw = int(round(math.sqrt(target_area * ratio)))
        ch = int(round(math.sqrt(target_area / ratio)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            crop_h, crop_w = ch, cw
            break
    else:
        # Fallback: clamp the ratio and take a center crop (torchvision convention).
        in_ratio = w / h
        if in_ratio < op.ratio_range[0]:
            crop_w, crop_h = w, min(h, int(round(w / op.ratio_range[0])))
        elif in_ratio > op.ratio_range[1]:
            crop_h, crop_w = h, min(w, int(round(h * op.ratio_range[1])))
        else:
            crop_h, crop_w = h, w
        top = (h - crop_h) // 2
        left = (w - crop_w) // 2
    patch = image[:, top : top + crop_h, left : left + crop_w]
    return resize_image(patch, op.out_size, op.out_size)


def _apply_color_distortion(op: ColorDistortion, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if image.shape[0] != 3:
        raise ValueError(f"color distortion requires a 3-channel image, got {image.shape[0]} channels")
    if rng.uniform() < op.p:
        b = 0.8 * op.strength
        hue_span = min(0.2 * op.strength, 0.5)
        order = rng.permutation(4)
        factors = {
            0: rng.uniform(max(0.0, 1.0 - b), 1.0 + b),  # brightness
            1: rng.uniform(max(0.0, 1.0 - b), 1.0 + b),  # contrast
            2: rng.uniform(max(0.0, 1.0 - b), 1.0 + b),  # saturation
            3: rng.uniform(-hue_span, hue_span),         # hue
        }
        for which in order:
            if which == 0:
                image = _adjust_brightness(image, factors[0])
            elif which == 1:
                image = _adjust_contrast(image, factors[1])
            elif which == 2:
                image = _adjust_saturation(image, factors[2])
            else:
                image = _adjust_hue(image, factors[3])
    if rng.uniform() < op.grayscale_p:
        image = _grayscale(image)
    return image


def _apply_gaussian_blur(op: GaussianBlur, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sigma = float(rng.uniform(op.sigma_range[0], op.sigma_range[1]))
    if sigma <= 0:
        raise ValueError(f"blur sigma must be positive, got {sigma}")
    side = min(image.shape[1], image.shape[2])
    k = op.kernel_size if op.kernel_size is not None else max(3, (int(round(0.1 * side)) // 2) * 2 + 1)
    blurred = cv2.GaussianBlur(_to_hwc(image), (k, k), sigmaX=sigma, borderType=cv2.BORDER_REFLECT)
    return np.clip(_to_chw(blurred), 0.0, 1.0)


def sobel_magnitude(image: np.ndarray) -> np.ndarray:
    """Per-channel Sobel gradient magnitude, renormalized so the image max is 1.

    A constant image maps to all zeros (no renormalization of a zero field).
    Borders use reflect padding.
    """
    image = _require_chw(image)
    mag = np.empty_like(image)
    for c in range(image.shape[0]):
        gx = ndimage.convolve(image[c], _SOBEL_X, mode="reflect")
        gy = ndimage.convolve(image[c], _SOBEL_Y, mode="reflect")
        mag[c] = np.sqrt(gx * gx + gy * gy)
    peak = float(mag.max())
    if peak > 0:
        mag /= peak
    return mag


def apply_augmentation(op: OpDescriptor, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply one descriptor to a CHW float image in [0, 1]; output stays in [0, 1]."""
    image = _require_chw(image)
    if isinstance(op, CropResize):
        if rng.uniform() < op.p:
            return _apply_crop_resize(op, image, rng)
        return image
    if isinstance(op, HorizontalFlip):
        if rng.uniform() < op.p:
            return image[:, :, ::-1].copy()
        return image
    if isinstance(op, ColorDistortion):
        return _apply_color_distortion(op, image, rng)
    if isinstance(op, GaussianBlur):
        if rng.uniform() < op.p:
            return _apply_gaussian_blur(op, image, rng)
        return image
    if isinstance(op, SobelFilter):
        if rng.uniform() < op.p:
            return sobel_magnitude(image)
        return image
    raise ValueError(f"unknown augmentation descriptor {type(op).__name__}")


def make_contrastive_pair(
    image: np.ndarray,
    pipeline: AugmentationPipeline,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent draws of the pipeline applied to the same source image."""
    if not pipeline.ops:
        raise ValueError("empty augmentation pipeline")
    views = []
    for _ in range(2):
        view = image
        for op in pipeline.ops:
            view = apply_augmentation(op, view, rng)
        views.append(np.ascontiguousarray(view, dtype=np.float32))
    return views[0], views[1]
