"""Per-stage optimization schedules.

The reference schedule is written as phase lengths (20/20/10/10 over 60
epochs): the learning rate drops by the decay factor at each phase boundary,
i.e. after epochs 20, 40 and 50. Milestones are stored cumulatively.
"""

from __future__ import annotations

from dataclasses import dataclass

# Phase-length presets. Paper-parity: 60 epochs; desk scale: 20 epochs.
PAPER_PHASES = (20, 20, 10, 10)
DESK_PHASES = (7, 7, 3, 3)
DESK_CONTRASTIVE_PHASES = (8, 8, 4, 3)


@dataclass(frozen=True)
class StageSchedule:
    epochs: int
    lr_milestones: tuple[int, ...]  # cumulative epoch boundaries, strictly increasing
    base_lr: float = 0.01
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    bias_decay_exempt: bool = True
    max_steps_per_epoch: int | None = None  # cap for smoke runs; None = full epoch

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("schedule needs at least one epoch")
        if any(b <= a for a, b in zip(self.lr_milestones, self.lr_milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {self.lr_milestones}")
        if self.lr_milestones and not 0 < self.lr_milestones[0]:
            raise ValueError("milestones must be positive epoch offsets")
        if self.lr_milestones and self.lr_milestones[-1] > self.epochs:
            raise ValueError(
                f"last milestone {self.lr_milestones[-1]} exceeds epoch budget {self.epochs}"
            )
        if self.base_lr < 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("invalid learning-rate parameters")
        if self.max_steps_per_epoch is not None and self.max_steps_per_epoch < 1:
            raise ValueError("max_steps_per_epoch must be positive")

    @classmethod
    def from_phases(cls, phase_lengths: tuple[int, ...], base_lr: float = 0.01, **kwargs) -> "StageSchedule":
        """Build from phase lengths; drops happen at the cumulative boundaries."""
        if not phase_lengths or any(p < 1 for p in phase_lengths):
            raise ValueError(f"phase lengths must be positive, got {phase_lengths}")
        boundaries = []
        total = 0
        for p in phase_lengths[:-1]:
            total += p
            boundaries.append(total)
        return cls(
            epochs=sum(phase_lengths), lr_milestones=tuple(boundaries), base_lr=base_lr, **kwargs
        )


def lr_at(schedule: StageSchedule, epoch: int) -> float:
    """Learning rate in effect for the given epoch (0-based)."""
    if not 0 <= epoch < schedule.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.epochs})")
    drops = sum(1 for m in schedule.lr_milestones if m <= epoch)
    return schedule.base_lr * schedule.lr_decay ** drops
