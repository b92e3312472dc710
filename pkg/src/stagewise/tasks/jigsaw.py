"""Jigsaw puzzle sample generation.

A window is cropped from the image and divided into a grid of cells; one tile
is picked at a random offset inside each cell, the tiles are reordered by a
permutation drawn from the level's set, and the reordered tiles are stacked
along the channel axis. The label is the index of the drawn permutation.

Tiles are independently mean/std-normalized per channel by default to
suppress low-level shortcut cues (edge continuity, chromatic aberration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stagewise.tasks.augment import _require_chw
from stagewise.tasks.levels import PretextSample, TaskLevelSpec


@dataclass(frozen=True)
class JigsawGeometry:
    """Window/grid/cell/tile sizes in pixels; grid * cell must equal window."""

    window: int
    grid: int
    cell: int
    tile: int

    def __post_init__(self) -> None:
        if min(self.window, self.grid, self.cell, self.tile) < 1:
            raise ValueError("geometry sizes must be positive")
        if self.grid * self.cell != self.window:
            raise ValueError(
                f"grid * cell must equal window: {self.grid} * {self.cell} != {self.window}"
            )
        if self.tile > self.cell:
            raise ValueError(f"tile side {self.tile} exceeds cell side {self.cell}")


PAPER_JIGSAW_GEOMETRY = JigsawGeometry(window=225, grid=3, cell=75, tile=64)
DESK_JIGSAW_GEOMETRY = JigsawGeometry(window=96, grid=3, cell=32, tile=24)


def _normalize_tile(tile: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mean = tile.mean(axis=(1, 2), keepdims=True)
    std = tile.std(axis=(1, 2), keepdims=True)
    return (tile - mean) / (std + eps)


def make_jigsaw_sample(
    image: np.ndarray,
    level_spec: TaskLevelSpec,
    rng: np.random.Generator,
    geometry: JigsawGeometry = PAPER_JIGSAW_GEOMETRY,
    *,
    flip_p: float = 0.5,
    normalize_tiles: bool = True,
    perm_index: int | None = None,
) -> PretextSample:
    """Build one jigsaw sample: [grid^2 * C, tile, tile] input, permutation-index label.

    Channel slot i of the output holds the tile from grid cell perm[i]
    (raster-scan cell order). Draw order: window top, window left, flip gate,
    permutation index, then per-cell tile offsets in raster order.
    """
    if level_spec.family != "jigsaw":
        raise ValueError(f"expected a jigsaw level spec, got family {level_spec.family!r}")
    image = _require_chw(image)
    channels, h, w = image.shape
    if min(h, w) < geometry.window:
        raise ValueError(
            f"image {h}x{w} smaller than jigsaw window {geometry.window}; "
            f"resize the shorter side first"
        )
    members = level_spec.payload.members
    if members.shape[1] != geometry.grid ** 2:
        raise ValueError(
            f"permutation length {members.shape[1]} does not match grid {geometry.grid}x{geometry.grid}"
        )

    top = int(rng.integers(0, h - geometry.window + 1))
    left = int(rng.integers(0, w - geometry.window + 1))
    window = image[:, top : top + geometry.window, left : left + geometry.window]
    if flip_p > 0 and rng.uniform() < flip_p:
        window = window[:, :, ::-1]

    if perm_index is None:
        perm_index = int(rng.integers(len(level_spec.payload)))
    elif not 0 <= perm_index < len(level_spec.payload):
        raise ValueError(f"permutation index {perm_index} outside set of {len(level_spec.payload)}")
    perm = members[perm_index]

    slack = geometry.cell - geometry.tile + 1
    tiles = []
    for r in range(geometry.grid):
        for c in range(geometry.grid):
            oy = int(rng.integers(0, slack))
            ox = int(rng.integers(0, slack))
            y0 = r * geometry.cell + oy
            x0 = c * geometry.cell + ox
            tile = window[:, y0 : y0 + geometry.tile, x0 : x0 + geometry.tile].astype(np.float32)
            if normalize_tiles:
                tile = _normalize_tile(tile)
            tiles.append(tile)

    stacked = np.concatenate([tiles[int(p)] for p in perm], axis=0)
    assert stacked.shape == (geometry.grid ** 2 * channels, geometry.tile, geometry.tile)
    return PretextSample(
        input=np.ascontiguousarray(stacked),
        label=perm_index,
        meta={"level": level_spec.level, "window_top": top, "window_left": left},
    )
