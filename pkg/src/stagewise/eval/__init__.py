"""Representation quality measurement: per-block probes and semi-supervised finetuning."""

from stagewise.eval.features import extract_block_features
from stagewise.eval.finetune import FinetuneSchedule, semi_supervised_finetune
from stagewise.eval.probe import ProbeReport, ProbeSchedule, linear_probe
from stagewise.eval.subset import SubsetSpec, class_balanced_subset

__all__ = [
    "extract_block_features",
    "linear_probe",
    "ProbeSchedule",
    "ProbeReport",
    "class_balanced_subset",
    "SubsetSpec",
    "semi_supervised_finetune",
    "FinetuneSchedule",
]
