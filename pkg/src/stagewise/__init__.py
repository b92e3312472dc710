"""Stage-wise self-supervised pretraining toolkit.

Builds multi-level pretext tasks (jigsaw, rotation, contrastive), partitions a
block backbone into overlapping stages, trains each stage on its own task
level with gradients confined to the stage, and scores the result with
per-block linear probes and semi-supervised finetuning.
"""

from stagewise.errors import CheckpointMismatchError, ConfigError, InfeasibleSetError, StagewiseError

__version__ = "0.1.0"

__all__ = [
    "StagewiseError",
    "ConfigError",
    "InfeasibleSetError",
    "CheckpointMismatchError",
    "__version__",
]
