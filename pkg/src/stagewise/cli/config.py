"""Experiment configuration: YAML schema, presets, and env-var overrides.

A config file is a nested key-value document validated against a published
JSON schema before any compute; unknown keys are rejected. Environment
variables of the form STAGEWISE_section__key=value override scalar fields
(env beats file). Every run artifact carries the sha256 hash of the resolved
config, so a run is reconstructible from (config, seed, dataset).
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import jsonschema
import yaml

from stagewise.engine.data import PreprocessConfig
from stagewise.engine.plan import TrainPlan, make_train_plan
from stagewise.engine.schedule import StageSchedule
from stagewise.errors import ConfigError
from stagewise.model.backbone import BackboneConfig, BlockConfig
from stagewise.tasks.jigsaw import JigsawGeometry
from stagewise.tasks.levels import contrastive_levels, jigsaw_levels, rotation_levels
from stagewise.tasks.permutations import generate_permutation_set

ENV_PREFIX = "STAGEWISE_"

CONFIG_VERSION = 1

_SCHEDULE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["phase_lengths"],
    "properties": {
        "phase_lengths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "base_lr": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "momentum": {"type": "number", "minimum": 0, "maximum": 1},
        "weight_decay": {"type": "number", "minimum": 0},
        "bias_decay_exempt": {"type": "boolean"},
        "max_steps_per_epoch": {"type": ["integer", "null"], "minimum": 1},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "run_id", "output_dir", "seed", "dataset", "train"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "run_id": {"type": "string", "minLength": 1},
        "output_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer"},
        "determinism": {"type": "boolean"},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["cifar10", "stl10", "folder", "synthetic"]},
                "root": {"type": "string"},
                "image_size": {"type": "integer", "minimum": 8},
                "num_classes": {"type": "integer", "minimum": 2},
                "n_train": {"type": "integer", "minimum": 1},
                "n_eval": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "limit_train": {"type": ["integer", "null"], "minimum": 1},
                "limit_eval": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "backbone": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stem_width": {"type": "integer", "minimum": 1},
                "blocks": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["units", "width", "downsample"],
                        "properties": {
                            "units": {"type": "integer", "minimum": 0},
                            "width": {"type": "integer", "minimum": 1},
                            "downsample": {"type": "boolean"},
                        },
                    },
                },
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["jigsaw", "rotation", "contrastive"]},
                "mode": {"enum": ["psl", "sl", "psl_f", "e2e"]},
                "stage_width": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "schedule": _SCHEDULE_SCHEMA,
                "schedules": {"type": "array", "items": _SCHEDULE_SCHEMA, "minItems": 1},
                "jigsaw": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "cardinalities": {
                            "type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1,
                        },
                        "permutation_seed": {"type": "integer"},
                        "min_pairwise_hamming": {"type": "integer", "minimum": 0},
                        "geometry": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["window", "grid", "cell", "tile"],
                            "properties": {
                                "window": {"type": "integer", "minimum": 1},
                                "grid": {"type": "integer", "minimum": 2},
                                "cell": {"type": "integer", "minimum": 1},
                                "tile": {"type": "integer", "minimum": 1},
                            },
                        },
                        "resize_shorter": {"type": ["integer", "null"], "minimum": 1},
                        "flip_p": {"type": "number", "minimum": 0, "maximum": 1},
                        "normalize_tiles": {"type": "boolean"},
                    },
                },
                "contrastive": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "out_size": {"type": "integer", "minimum": 8},
                        "strength": {"type": "number", "exclusiveMinimum": 0},
                        "temperature": {"type": "number", "exclusiveMinimum": 0},
                        "crop_scale": {
                            "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2,
                        },
                        "blur_kernel": {"type": ["integer", "null"], "minimum": 3},
                    },
                },
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "probe_epochs": {"type": "integer", "minimum": 1},
                "probe_lr": {"type": "number", "exclusiveMinimum": 0},
                "probe_batch_size": {"type": "integer", "minimum": 1},
                "blocks": {"type": "array", "items": {"type": "string"}},
                "baseline_seed": {"type": "integer"},
                "semi_supervised": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "fractions": {
                            "type": "array",
                            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        },
                        "epochs": {"type": "integer", "minimum": 0},
                        "base_lr": {"type": "number", "minimum": 0},
                        "batch_size": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
    },
}


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _parse_scalar(text: str) -> Any:
    return yaml.safe_load(text)


def apply_env_overrides(config: dict, environ: dict[str, str] | None = None) -> dict:
    """STAGEWISE_a__b__c=value sets config[a][b][c]; env beats file."""
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(config))  # deep copy of plain data
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].split("__")
        node = out
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = _parse_scalar(value)
    return out


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {location}: {exc.message}") from exc
    return config


def load_config(path, *, environ: dict[str, str] | None = None) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return validate_config(apply_env_overrides(raw, environ))


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

DEFAULT_BACKBONE = {
    "stem_width": 16,
    "blocks": [
        {"units": 1, "width": 16, "downsample": False},
        {"units": 1, "width": 32, "downsample": True},
        {"units": 1, "width": 64, "downsample": True},
        {"units": 1, "width": 128, "downsample": True},
        {"units": 1, "width": 256, "downsample": True},
    ],
}


def _desk_base(family: str) -> dict:
    return {
        "version": CONFIG_VERSION,
        "run_id": f"desk-{family}",
        "output_dir": "runs",
        "seed": 0,
        "determinism": True,
        "dataset": {"name": "synthetic", "image_size": 32, "num_classes": 10,
                    "n_train": 3000, "n_eval": 1000, "seed": 0},
        "backbone": json.loads(json.dumps(DEFAULT_BACKBONE)),
        "eval": {"probe_epochs": 30, "probe_lr": 0.1, "probe_batch_size": 256,
                 "semi_supervised": {"fractions": [0.01, 0.1], "epochs": 10,
                                     "base_lr": 0.01, "batch_size": 64}},
    }


def preset(name: str) -> dict:
    """Bundled desk-scale presets: desk-rotation, desk-jigsaw, desk-simclr."""
    if name == "desk-rotation":
        cfg = _desk_base("rotation")
        cfg["train"] = {
            "family": "rotation", "mode": "psl", "stage_width": 3, "batch_size": 64,
            "schedule": {"phase_lengths": [7, 7, 3, 3], "base_lr": 0.01},
        }
        return cfg
    if name == "desk-jigsaw":
        cfg = _desk_base("jigsaw")
        cfg["train"] = {
            "family": "jigsaw", "mode": "psl", "stage_width": 3, "batch_size": 64,
            "schedule": {"phase_lengths": [7, 7, 3, 3], "base_lr": 0.01},
            "jigsaw": {
                "cardinalities": [500, 1000, 2000], "permutation_seed": 0,
                "min_pairwise_hamming": 3,
                "geometry": {"window": 96, "grid": 3, "cell": 32, "tile": 24},
                "resize_shorter": 112, "flip_p": 0.5, "normalize_tiles": True,
            },
        }
        return cfg
    if name == "desk-simclr":
        cfg = _desk_base("contrastive")
        cfg["train"] = {
            "family": "contrastive", "mode": "psl", "stage_width": 3, "batch_size": 128,
            "schedules": [
                {"phase_lengths": [7, 7, 3, 3], "base_lr": 0.05},
                {"phase_lengths": [8, 8, 4, 3], "base_lr": 0.05},
                {"phase_lengths": [8, 8, 4, 3], "base_lr": 0.05},
            ],
            "contrastive": {"out_size": 32, "strength": 0.5, "temperature": 0.5,
                            "crop_scale": [0.2, 1.0]},
        }
        return cfg
    raise ConfigError(f"unknown preset {name!r}; known: desk-rotation, desk-jigsaw, desk-simclr")


# ---------------------------------------------------------------------------
# Config -> TrainPlan
# ---------------------------------------------------------------------------

def _schedule_from_dict(raw: dict) -> StageSchedule:
    kwargs = {k: v for k, v in raw.items() if k != "phase_lengths"}
    return StageSchedule.from_phases(tuple(raw["phase_lengths"]), **kwargs)


def backbone_from_config(config: dict, *, input_channels: int, seed: int) -> BackboneConfig:
    raw = config.get("backbone") or DEFAULT_BACKBONE
    blocks = tuple(BlockConfig(**b) for b in raw["blocks"])
    return BackboneConfig(
        input_channels=input_channels,
        stem_width=raw.get("stem_width", blocks[0].width),
        blocks=blocks,
        seed=seed,
    )


def plan_from_config(config: dict, *, image_size: int, image_channels: int = 3) -> TrainPlan:
    """Build the TrainPlan described by a validated config document."""
    train = dict(config["train"])
    family = train["family"]
    seed = config["seed"]
    backbone = backbone_from_config(config, input_channels=image_channels, seed=seed)

    preprocess = PreprocessConfig()
    if family == "jigsaw":
        jig = train.get("jigsaw") or {}
        cards = tuple(jig.get("cardinalities", (500, 1000, 2000)))
        geometry_raw = jig.get("geometry")
        geometry = JigsawGeometry(**geometry_raw) if geometry_raw else JigsawGeometry(225, 3, 75, 64)
        base = generate_permutation_set(
            geometry.grid ** 2, max(cards),
            seed=jig.get("permutation_seed", seed),
            min_pairwise_hamming=jig.get("min_pairwise_hamming", 3),
        )
        levels = jigsaw_levels(base, cards)
        preprocess = PreprocessConfig(
            resize_shorter=jig.get("resize_shorter"),
            jigsaw_geometry=geometry,
            jigsaw_flip_p=jig.get("flip_p", 0.5),
            normalize_tiles=jig.get("normalize_tiles", True),
        )
    elif family == "rotation":
        levels = rotation_levels()
    else:
        con = train.get("contrastive") or {}
        levels = contrastive_levels(
            con.get("out_size", image_size),
            strength=con.get("strength", 1.0),
            temperature=con.get("temperature", 0.5),
            crop_scale=tuple(con.get("crop_scale", (0.2, 1.0))),
            blur_kernel=con.get("blur_kernel"),
        )

    if "schedules" in train:
        schedules = [_schedule_from_dict(s) for s in train["schedules"]]
    elif "schedule" in train:
        schedules = _schedule_from_dict(train["schedule"])
    else:
        schedules = StageSchedule.from_phases((7, 7, 3, 3), base_lr=0.01)

    mode = train.get("mode", "psl")
    width = train.get("stage_width", 3)
    return make_train_plan(
        family, levels, backbone,
        mode=mode, stage_width=width, schedules=schedules,
        batch_size=train.get("batch_size", 64), seed=seed,
        input_size=image_size, preprocess=preprocess,
    )
