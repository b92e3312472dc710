import numpy as np
import pytest

from stagewise.cli.datasets import synthetic_shapes
from stagewise.model.backbone import BackboneConfig, BlockConfig
from stagewise.tasks.permutations import generate_permutation_set


@pytest.fixture(scope="session")
def base_permset_2000():
    """The full 9-element base set; shared because construction takes seconds."""
    return generate_permutation_set(9, 2000, seed=0, min_pairwise_hamming=3)


@pytest.fixture(scope="session")
def permset_s4_full():
    """All 24 permutations of 4 elements, greedily collected."""
    return generate_permutation_set(4, 24, seed=0, min_pairwise_hamming=1)


@pytest.fixture()
def small_backbone():
    """Five thin blocks; fast enough for per-test training."""
    return BackboneConfig(
        input_channels=3,
        stem_width=8,
        blocks=(
            BlockConfig(units=0, width=8, downsample=False),
            BlockConfig(units=0, width=12, downsample=True),
            BlockConfig(units=0, width=16, downsample=True),
            BlockConfig(units=0, width=24, downsample=True),
            BlockConfig(units=0, width=32, downsample=True),
        ),
        seed=0,
    )


@pytest.fixture(scope="session")
def tiny_dataset():
    return synthetic_shapes(160, image_size=32, num_classes=10, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
