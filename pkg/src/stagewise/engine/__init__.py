"""Progressive stage-wise training engine."""

from stagewise.engine.data import ArrayDataset
from stagewise.engine.plan import TrainPlan, make_train_plan, stage_level
from stagewise.engine.schedule import (
    DESK_CONTRASTIVE_PHASES,
    DESK_PHASES,
    PAPER_PHASES,
    StageSchedule,
    lr_at,
)
from stagewise.engine.trainer import TrainLog, run_plan, train_stage

__all__ = [
    "ArrayDataset",
    "TrainPlan",
    "make_train_plan",
    "stage_level",
    "StageSchedule",
    "lr_at",
    "PAPER_PHASES",
    "DESK_PHASES",
    "DESK_CONTRASTIVE_PHASES",
    "TrainLog",
    "run_plan",
    "train_stage",
]
