"""Multi-level self-supervised task generation: jigsaw, rotation, contrastive."""

from stagewise.tasks.augment import (
    AugmentationPipeline,
    ColorDistortion,
    CropResize,
    GaussianBlur,
    HorizontalFlip,
    SobelFilter,
    apply_augmentation,
    contrastive_pipeline,
    make_contrastive_pair,
)
from stagewise.tasks.jigsaw import DESK_JIGSAW_GEOMETRY, PAPER_JIGSAW_GEOMETRY, JigsawGeometry, make_jigsaw_sample
from stagewise.tasks.levels import PretextSample, TaskLevelSpec, contrastive_levels, jigsaw_levels, rotation_levels
from stagewise.tasks.permutations import (
    PermutationSet,
    generate_permutation_set,
    nest_levels,
    read_permutation_csv,
    write_permutation_csv,
)
from stagewise.tasks.rotation import RotationSet, make_rotation_sample, rotate_image, rotation_set

__all__ = [
    "AugmentationPipeline",
    "ColorDistortion",
    "CropResize",
    "GaussianBlur",
    "HorizontalFlip",
    "SobelFilter",
    "apply_augmentation",
    "contrastive_pipeline",
    "make_contrastive_pair",
    "JigsawGeometry",
    "PAPER_JIGSAW_GEOMETRY",
    "DESK_JIGSAW_GEOMETRY",
    "make_jigsaw_sample",
    "PretextSample",
    "TaskLevelSpec",
    "jigsaw_levels",
    "rotation_levels",
    "contrastive_levels",
    "PermutationSet",
    "generate_permutation_set",
    "nest_levels",
    "read_permutation_csv",
    "write_permutation_csv",
    "RotationSet",
    "rotation_set",
    "rotate_image",
    "make_rotation_sample",
]
