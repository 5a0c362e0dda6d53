"""Run configuration: schema validation, profile merging, hashing, manifests."""

from __future__ import annotations

import copy
import hashlib
import json
import time
from pathlib import Path

import jsonschema

from .. import __version__
from ..errors import InvalidInputError
from .profiles import PROFILES

_number = {"type": "number"}
_pos_number = {"type": "number", "exclusiveMinimum": 0}
_pos_int = {"type": "integer", "minimum": 1}
_range = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_vec3 = {"type": "array", "items": _number, "minItems": 3, "maxItems": 3}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed", "output_dir", "category", "datagen", "camera", "sampling", "training", "servo", "eval"],
    "properties": {
        "version": {"const": 1},
        "profile": {"enum": list(PROFILES)},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "category": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "dimension_ranges", "stiffness_gaussian", "resolution", "fixed_face", "count"],
            "properties": {
                "kind": {"enum": ["box", "cylinder", "hemi_ellipsoid"]},
                "dimension_ranges": {
                    "type": "object",
                    "additionalProperties": _range,
                },
                "stiffness_gaussian": _range,
                "resolution": _pos_number,
                "fixed_face": {"enum": ["none", "x_min", "x_max", "y_min", "y_max", "z_min", "z_max"]},
                "count": _pos_int,
            },
        },
        "datagen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arms": {"enum": [1, 2]},
                "trajectories_per_grasp": _pos_int,
                "checkpoint_stride": _pos_int,
                "checkpoints": {"type": "integer", "minimum": 2},
                "raw_points": _pos_int,
                "settle_frames": {"type": "integer", "minimum": 0},
                "translation_factor": _pos_number,
                "max_rotation_deg": _pos_number,
                "dt": _pos_number,
                "gravity": _vec3,
            },
        },
        "camera": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "distance": _pos_number,
                "azimuth_deg": _number,
                "elevation_deg": _number,
                "resolution": {"type": "integer", "minimum": 16},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy_count": _pos_int,
                "mp_count": _pos_int,
                "classifier_count": {"type": "integer", "minimum": 0},
                "n_points": _pos_int,
                "k_nearest": _pos_int,
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": _pos_int,
                "batch_size": _pos_int,
                "base_lr": _pos_number,
                "with_masks": {"type": "boolean"},
                "translation_only": {"type": "boolean"},
            },
        },
        "servo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon_translation": _pos_number,
                "epsilon_rotation_deg": _pos_number,
                "max_steps": _pos_int,
                "action_frames": _pos_int,
                "settle_frames": {"type": "integer", "minimum": 0},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "objects": _pos_int,
                "goals_per_object": _pos_int,
                "goal_seed": {"type": "integer", "minimum": 0},
            },
        },
        "rrt": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerances": {"type": "array", "items": _pos_number, "minItems": 1},
                "step_translation": _pos_number,
                "step_rotation": _pos_number,
                "max_iterations": _pos_int,
                "goal_bias": {"type": "number", "minimum": 0, "maximum": 1},
                "action_frames": _pos_int,
                "goals": _pos_int,
            },
        },
        "tasks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "retraction": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "trials": _pos_int,
                        "plane_seed": {"type": "integer"},
                        "shift_increment": _pos_number,
                        "max_shifts": _pos_int,
                        "angle_range_deg": _range,
                    },
                },
                "tube_connect": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "trials": _pos_int,
                        "curve_seed": {"type": "integer"},
                        "tube_radius": _pos_number,
                        "tube_length": _pos_number,
                        "gap": _pos_number,
                    },
                },
                "wrap": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "trials": _pos_int,
                        "pose_seed": {"type": "integer"},
                        "tube_radius": _pos_number,
                        "tube_length": _pos_number,
                        "rays": _pos_int,
                    },
                },
            },
        },
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, profile: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve profile defaults + config file + CLI overrides; validate strictly."""
    user: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        user = json.loads(p.read_text())
    profile_name = profile or user.get("profile", "desk")
    if profile_name not in PROFILES:
        raise InvalidInputError(f"unknown profile {profile_name!r}")
    merged = _deep_merge(PROFILES[profile_name], user)
    merged["profile"] = profile_name
    if overrides:
        merged = _deep_merge(merged, overrides)
    try:
        jsonschema.validate(merged, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InvalidInputError(f"config schema violation: {exc.message} at {list(exc.absolute_path)}") from exc
    return merged


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_manifest(out_dir, command: str, config: dict, outputs: list[str], metrics=None, extra=None) -> Path:
    """Replay manifest: config hash + seeds + versions + produced artifacts.

    Wall time lives only here, never in metric reports, so reports stay
    byte-identical across replays.
    """
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "config": config,
        "package_version": __version__,
        "outputs": sorted(outputs),
        "metrics": metrics,
        "wall_time_unix": time.time(),
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / f"{command.replace(' ', '_')}_manifest.json"
    write_json(path, manifest)
    return path
