"""Training plans: stage-to-task binding, schedules, and ablation modes."""

from __future__ import annotations

from dataclasses import dataclass, field

from stagewise.engine.data import PreprocessConfig
from stagewise.engine.schedule import StageSchedule
from stagewise.model.backbone import BackboneConfig, build_backbone
from stagewise.partition import StagePartition, TrainingMode, make_stages
from stagewise.tasks.levels import TaskLevelSpec


@dataclass(frozen=True)
class TrainPlan:
    """Everything needed to reproduce a pretraining run.

    levels are ordered by ascending complexity. In PSL/PSL_F mode stage i
    trains level i (so the level count must match the stage count); SL binds
    the hardest level to every stage; E2E uses the hardest level on a single
    stage spanning the whole network.
    """

    family: str
    levels: tuple[TaskLevelSpec, ...]
    partition: StagePartition
    schedules: tuple[StageSchedule, ...]
    mode: TrainingMode
    batch_size: int
    seed: int
    backbone: BackboneConfig
    input_size: int
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("plan needs at least one task level")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.family == "contrastive" and self.batch_size < 2:
            raise ValueError("contrastive training needs batch size >= 2 for negatives")
        if any(l.family != self.family for l in self.levels):
            raise ValueError("all levels must belong to the plan's task family")
        levels_sorted = [l.level for l in self.levels]
        if levels_sorted != sorted(levels_sorted):
            raise ValueError("levels must be ordered by ascending complexity")
        if self.mode in (TrainingMode.PSL, TrainingMode.PSL_F):
            if len(self.levels) != self.partition.num_stages:
                raise ValueError(
                    f"{self.mode.value} needs one level per stage: "
                    f"{len(self.levels)} levels vs {self.partition.num_stages} stages"
                )
        if self.mode is TrainingMode.E2E and self.partition.num_stages != 1:
            raise ValueError("e2e mode requires a single stage spanning all blocks")
        if len(self.schedules) != self.partition.num_stages:
            raise ValueError(
                f"need one schedule per stage: {len(self.schedules)} schedules vs "
                f"{self.partition.num_stages} stages"
            )


def stage_level(plan: TrainPlan, stage_index: int) -> TaskLevelSpec:
    """Task level bound to a stage under the plan's mode."""
    if not 1 <= stage_index <= plan.partition.num_stages:
        raise ValueError(f"stage index {stage_index} outside [1, {plan.partition.num_stages}]")
    if plan.mode in (TrainingMode.PSL, TrainingMode.PSL_F):
        return plan.levels[stage_index - 1]
    return plan.levels[-1]  # SL and E2E train the hardest task


def make_train_plan(
    family: str,
    levels: list[TaskLevelSpec] | tuple[TaskLevelSpec, ...],
    backbone: BackboneConfig,
    *,
    mode: TrainingMode | str = TrainingMode.PSL,
    stage_width: int = 3,
    schedules: StageSchedule | list[StageSchedule] | tuple[StageSchedule, ...],
    batch_size: int,
    seed: int,
    input_size: int,
    preprocess: PreprocessConfig | None = None,
) -> TrainPlan:
    """Validate and assemble a TrainPlan; derives the partition from the backbone.

    Pass the backbone config with the dataset's channel count: for the jigsaw
    family the stem is adapted to grid^2 x source channels and the model input
    side becomes the tile size. E2E overrides the stage width so a single
    stage covers every block. A single schedule is replicated across stages.
    """
    mode = TrainingMode(mode)
    if family == "jigsaw":
        geometry = (preprocess or PreprocessConfig()).jigsaw_geometry
        tile = geometry.tile if geometry is not None else 64
        grid = geometry.grid if geometry is not None else 3
        backbone = backbone.with_input_channels(grid * grid * backbone.input_channels)
        model_input_size = tile
    else:
        model_input_size = input_size
    _, block_specs = build_backbone(backbone, input_size=model_input_size)

    width = len(block_specs) if mode is TrainingMode.E2E else stage_width
    partition = make_stages(block_specs, width)

    if isinstance(schedules, StageSchedule):
        schedules = (schedules,) * partition.num_stages
    else:
        schedules = tuple(schedules)
        if len(schedules) == 1:
            schedules = schedules * partition.num_stages

    return TrainPlan(
        family=family,
        levels=tuple(levels),
        partition=partition,
        schedules=schedules,
        mode=mode,
        batch_size=batch_size,
        seed=seed,
        backbone=backbone,
        input_size=model_input_size,
        preprocess=preprocess or PreprocessConfig(),
    )
