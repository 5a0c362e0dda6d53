"""Retraction: fold a fixed-edge tissue layer past an operator-specified plane."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import (
    PointCloud,
    axis_angle_matrix,
    fit_dominant_plane_ransac,
    object_frame,
)
from ..sensing import CameraModel, preprocess_observation, render_partial_cloud
from ..servo import ServoConfig, ServoResult, grasp_with_selector, servo_loop
from ..softbody import Simulator
from .goals import PlaneGoal


def retraction_goal(
    current: PointCloud,
    goal: PlaneGoal,
    ransac_iterations: int = 100,
    ransac_tol: float = 0.004,
    rng_seed: int = 0,
) -> PointCloud:
    """Heuristic goal cloud: rotate bad-side points past the target plane.

    Fits the dominant plane of the cloud, takes the minimum rotation aligning
    it with the target plane, and applies it about the two planes' intersection
    line (the fold hinge) to every bad-side point; good-side points stay.
    """
    target = goal.plane
    signed = target.signed_distance(current.points)
    bad = signed <= 0.0
    if not bad.any():
        return PointCloud(current.points.copy(), dict(current.channels))

    fitted = fit_dominant_plane_ransac(current, ransac_iterations, ransac_tol, rng_seed)
    n_fit = fitted.normal if fitted.normal @ target.normal >= 0 else -fitted.normal
    d_fit = fitted.offset if fitted.normal @ target.normal >= 0 else -fitted.offset

    axis = np.cross(n_fit, target.normal)
    axis_norm = np.linalg.norm(axis)
    out = current.points.copy()
    if axis_norm < 1e-9:
        # parallel planes: reflect bad points across the target plane
        out[bad] = out[bad] - 2.0 * signed[bad, None] * target.normal
        return PointCloud(out, dict(current.channels))

    angle = float(np.arctan2(axis_norm, n_fit @ target.normal))
    rotation = axis_angle_matrix(axis, angle)
    # hinge: minimum-norm point on both planes
    c = n_fit @ target.normal
    denom = 1.0 - c * c
    a = (d_fit - goal.plane.offset * c) / denom
    b = (goal.plane.offset - d_fit * c) / denom
    pivot = a * n_fit + b * target.normal
    out[bad] = (out[bad] - pivot) @ rotation.T + pivot
    return PointCloud(out, dict(current.channels))


@dataclass
class RetractionResult:
    success: bool
    shifts_used: int
    total_actions: int
    servo_results: list[ServoResult] = field(default_factory=list)
    reason: str = ""


def run_retraction(
    sim: Simulator,
    policy,
    selector,
    goal: PlaneGoal,
    config: ServoConfig,
    camera: CameraModel,
) -> RetractionResult:
    """Iteratively servo toward shifted-plane heuristic goals until the whole
    tissue is on the good side; fail when it ends up entirely on the bad side
    or the shift budget is exhausted."""

    def all_good() -> bool:
        return bool(np.all(goal.plane.signed_distance(sim.full_cloud().points) > 0.0))

    def all_bad() -> bool:
        return bool(np.all(goal.plane.signed_distance(sim.full_cloud().points) < 0.0))

    if all_good():
        return RetractionResult(True, 0, 0, reason="already satisfied")

    frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
    results: list[ServoResult] = []
    total_actions = 0
    frame_ids = None
    for shift in range(goal.max_shifts + 1):
        plane_now = goal.plane.shifted(shift * goal.shift_increment)
        raw = render_partial_cloud(sim.state, sim.mesh, camera)
        heuristic_world = retraction_goal(raw, PlaneGoal(plane_now, goal.shift_increment, goal.max_shifts))
        goal_cloud = preprocess_observation(heuristic_world, frame, config.n_points)
        if frame_ids is None:
            frame_ids, _ = grasp_with_selector(sim, selector, goal_cloud, config, camera, frame)
        result = servo_loop(sim, policy, frame_ids, goal_cloud, config, camera, frame)
        results.append(result)
        total_actions += result.steps
        if all_good():
            return RetractionResult(True, shift, total_actions, results, "good side reached")
        if all_bad():
            return RetractionResult(False, shift, total_actions, results, "entirely on bad side")
    return RetractionResult(False, goal.max_shifts, total_actions, results, "shift budget exhausted")
