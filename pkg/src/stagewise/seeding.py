"""Deterministic seed derivation.

Every source of randomness in the package draws from a generator derived from
an explicit tuple of integers (base seed plus stream tag plus loop indices),
never from global RNG state. That keeps any nested loop reproducible and makes
resume-from-checkpoint bit-equivalent to an uninterrupted run.
"""

from __future__ import annotations

import numpy as np

# Stream tags: unrelated consumers must never collide on the same child seed.
STREAM_INIT = 101        # backbone parameter init
STREAM_HEAD = 102        # per-stage projection-head init
STREAM_SHUFFLE = 103     # per-epoch dataset order
STREAM_SAMPLE = 104      # per-sample augmentation draws
STREAM_PROBE = 105       # linear-probe training
STREAM_FINETUNE = 106    # semi-supervised finetuning
STREAM_SUBSET = 107      # class-balanced subset selection
STREAM_DATASET = 108     # synthetic dataset generation

_MASK64 = (1 << 64) - 1


def seed_sequence(*parts: int) -> np.random.SeedSequence:
    """Build a SeedSequence from an ordered tuple of integers."""
    return np.random.SeedSequence([int(p) & _MASK64 for p in parts])


def rng_for(*parts: int) -> np.random.Generator:
    """Fresh numpy generator for the given seed tuple."""
    return np.random.default_rng(seed_sequence(*parts))


def torch_seed_for(*parts: int) -> int:
    """63-bit integer seed for torch.Generator.manual_seed."""
    state = seed_sequence(*parts).generate_state(2, np.uint32)
    return (int(state[0]) << 31 | int(state[1])) & ((1 << 63) - 1)
