"""Operator goal specifications and their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from ..geometry import Plane

GOAL_FILE_VERSION = 1


@dataclass
class PlaneGoal:
    """Fold the object to the good side of a plane, shifting when stuck."""

    plane: Plane
    shift_increment: float = 0.005
    max_shifts: int = 5

    def __post_init__(self):
        if self.shift_increment <= 0:
            raise InvalidInputError("shift_increment must be > 0")


@dataclass
class CurveGoal:
    """Operator space curve describing how two tubes should connect."""

    points: np.ndarray  # (n, 3) polyline
    diameter: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 2 or self.points.shape[1] != 3:
            raise InvalidInputError("curve needs at least 2 3D points")
        if self.diameter <= 0:
            raise InvalidInputError("diameter must be > 0")


@dataclass
class WrapGoal:
    """Wrap a tissue sheet around a target cylinder."""

    center: np.ndarray  # cylinder center
    axis: np.ndarray  # cylinder axis direction
    length: float
    radius: float
    tissue_length: float
    max_gap: float | None = None  # ray length bound for coverage scoring
    ref_dir: np.ndarray | None = None  # azimuth reference; rotates with the goal

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.axis = np.asarray(self.axis, dtype=np.float64)
        norm = np.linalg.norm(self.axis)
        if norm < 1e-12:
            raise InvalidInputError("axis must be non-zero")
        self.axis = self.axis / norm
        if min(self.length, self.radius, self.tissue_length) <= 0:
            raise InvalidInputError("length, radius, and tissue_length must be > 0")
        if self.ref_dir is not None:
            self.ref_dir = np.asarray(self.ref_dir, dtype=np.float64)

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal (u, v) spanning the cross-section plane."""
        helper = self.ref_dir
        if helper is None:
            helper = np.array([0.0, 0.0, 1.0])
            if abs(self.axis @ helper) > 0.9:
                helper = np.array([1.0, 0.0, 0.0])
        u = np.cross(self.axis, helper)
        nu = np.linalg.norm(u)
        if nu < 1e-12:
            raise InvalidInputError("ref_dir is parallel to the cylinder axis")
        u = u / nu
        return u, np.cross(self.axis, u)

    @property
    def goal_radius(self) -> float:
        # goal cylinder circumference equals the tissue length
        return self.tissue_length / (2.0 * np.pi)

    @property
    def gap_bound(self) -> float:
        if self.max_gap is not None:
            return self.max_gap
        return max(0.01, 2.5 * abs(self.goal_radius - self.radius))


def save_goal_file(path, goal) -> None:
    if isinstance(goal, PlaneGoal):
        payload = {
            "version": GOAL_FILE_VERSION,
            "type": "plane",
            "plane": {
                "normal": goal.plane.normal.tolist(),
                "offset": goal.plane.offset,
                "shift_increment": goal.shift_increment,
                "max_shifts": goal.max_shifts,
            },
        }
    elif isinstance(goal, CurveGoal):
        payload = {
            "version": GOAL_FILE_VERSION,
            "type": "curve",
            "curve": {"points": goal.points.tolist(), "diameter": goal.diameter},
        }
    elif isinstance(goal, WrapGoal):
        payload = {
            "version": GOAL_FILE_VERSION,
            "type": "wrap",
            "wrap": {
                "center": goal.center.tolist(),
                "axis": goal.axis.tolist(),
                "length": goal.length,
                "radius": goal.radius,
                "tissue_length": goal.tissue_length,
                "max_gap": goal.max_gap,
            },
        }
    else:
        raise InvalidInputError(f"unknown goal type {type(goal).__name__}")
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_goal_file(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != GOAL_FILE_VERSION:
        raise InvalidInputError(f"unsupported goal file version {payload.get('version')}")
    kind = payload.get("type")
    if kind == "plane":
        p = payload["plane"]
        return PlaneGoal(
            Plane(p["normal"], p["offset"]),
            p.get("shift_increment", 0.005),
            p.get("max_shifts", 5),
        )
    if kind == "curve":
        c = payload["curve"]
        return CurveGoal(np.asarray(c["points"]), c["diameter"])
    if kind == "wrap":
        w = payload["wrap"]
        return WrapGoal(
            w["center"], w["axis"], w["length"], w["radius"], w["tissue_length"], w.get("max_gap")
        )
    raise InvalidInputError(f"unknown goal type {kind!r}")
