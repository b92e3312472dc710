"""Class-balanced label-fraction subsets for semi-supervised evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stagewise.seeding import STREAM_SUBSET, rng_for


@dataclass(frozen=True)
class SubsetSpec:
    fraction: float
    per_class_counts: dict[int, int]
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")

    @property
    def total(self) -> int:
        return sum(self.per_class_counts.values())


def class_balanced_subset(
    labels: np.ndarray, fraction: float, seed: int
) -> tuple[SubsetSpec, np.ndarray]:
    """Seeded-uniform per-class selection of a label fraction.

    Each class contributes floor(fraction * count) picks, plus one extra for
    the classes with the largest fractional remainders until the rounded
    global target is met. Deterministic for (labels, fraction, seed); returned
    indices are sorted.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    too_small = classes[fraction * counts < 1.0]
    if too_small.size:
        raise ValueError(
            f"fraction {fraction} selects no samples for class(es) {too_small.tolist()}"
        )

    exact = fraction * counts
    base = np.floor(exact).astype(int)
    target = int(round(fraction * labels.size))
    remainder = target - int(base.sum())
    take = base.copy()
    if remainder > 0:
        # Largest fractional parts get the extra picks; ties break on class id.
        order = np.lexsort((classes, -(exact - base)))
        for cls_pos in order[:remainder]:
            if take[cls_pos] < counts[cls_pos]:
                take[cls_pos] += 1

    rng = rng_for(seed, STREAM_SUBSET)
    picked = []
    for cls, k in zip(classes, take):
        members = np.flatnonzero(labels == cls)
        picked.append(rng.choice(members, size=int(k), replace=False))
    indices = np.sort(np.concatenate(picked))
    spec = SubsetSpec(
        fraction=fraction,
        per_class_counts={int(c): int(k) for c, k in zip(classes, take)},
        seed=seed,
    )
    return spec, indices
