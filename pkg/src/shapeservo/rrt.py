"""Sampling-based baseline: tree search over end-effector poses with the FEM
forward model, terminating inside a Chamfer goal region."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SimulationDivergedError
from .geometry import (
    PointCloud,
    RigidTransform,
    axis_angle_matrix,
    chamfer_distance,
    geodesic_distance,
    interpolate_pose,
    object_frame,
    rotation_log,
)
from .sensing import CameraModel, preprocess_observation, render_partial_cloud
from .softbody import Simulator

ROTATION_WEIGHT = 0.1  # meters per radian in the SE(3) nearest-neighbor metric


@dataclass(frozen=True)
class RrtConfig:
    tolerance: float  # Chamfer goal-region radius
    step_translation: float = 0.02
    step_rotation: float = 0.25
    max_iterations: int = 300
    goal_bias: float = 0.2
    workspace_lo: tuple = (-0.2, -0.2, -0.05)
    workspace_hi: tuple = (0.2, 0.2, 0.25)
    action_frames: int = 10
    n_points: int = 256
    rng_seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise InvalidInputError("tolerance must be > 0")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise InvalidInputError("goal_bias must be in [0, 1]")


@dataclass
class PlanResult:
    success: bool
    path: list[RigidTransform] = field(default_factory=list)
    nodes_expanded: int = 0
    wall_time: float = 0.0
    best_chamfer: float = float("inf")
    final_chamfer: float | None = None


def _pose_distance(a: RigidTransform, b: RigidTransform) -> float:
    t = float(np.linalg.norm(a.translation - b.translation))
    return t + ROTATION_WEIGHT * geodesic_distance(a.rotation, b.rotation)


def _clamped_step(source: RigidTransform, target: RigidTransform, config: RrtConfig) -> RigidTransform:
    dt = target.translation - source.translation
    nt = np.linalg.norm(dt)
    if nt > config.step_translation:
        dt = dt * (config.step_translation / nt)
    rel = source.rotation.T @ target.rotation
    w = rotation_log(rel)
    ang = np.linalg.norm(w)
    if ang > config.step_rotation:
        w = w * (config.step_rotation / ang)
        ang = config.step_rotation
    rot = source.rotation @ (axis_angle_matrix(w, ang) if ang > 1e-12 else np.eye(3))
    return RigidTransform(rot, source.translation + dt, validate=False)


def plan(
    sim: Simulator,
    goal_cloud: PointCloud,
    config: RrtConfig,
    camera: CameraModel,
    frame: RigidTransform | None = None,
) -> PlanResult:
    """Grow a tree in single-arm end-effector pose space until a node's cloud
    enters the Chamfer goal region. The object must already be grasped.

    Deterministic given the config seed. Planning exhaustion is reported as an
    unsuccessful PlanResult, not an exception.
    """
    if len(sim.state.attachments) != 1:
        raise InvalidInputError("RRT baseline plans for exactly one grasped arm")
    fid = sim.state.attachments[0].frame_id
    if frame is None:
        frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))

    def observe(s: Simulator) -> PointCloud:
        raw = render_partial_cloud(s.state, s.mesh, camera)
        return PointCloud(preprocess_observation(raw, frame, config.n_points).points)

    t_start = time.monotonic()
    rng = np.random.default_rng(config.rng_seed)
    root_cloud = observe(sim)
    root_chamfer = chamfer_distance(root_cloud, goal_cloud)
    result = PlanResult(success=False, best_chamfer=root_chamfer)
    if root_chamfer <= config.tolerance:
        result.success = True
        result.final_chamfer = root_chamfer
        result.wall_time = time.monotonic() - t_start
        return result

    nodes = [
        {"sim": sim.copy(), "pose": sim.state.grasp_frames[fid], "chamfer": root_chamfer, "parent": -1}
    ]
    lo = np.asarray(config.workspace_lo)
    hi = np.asarray(config.workspace_hi)

    for _ in range(config.max_iterations):
        biased = rng.uniform() < config.goal_bias
        t_rand = rng.uniform(lo, hi)
        axis = rng.normal(size=3)
        angle = rng.uniform(0.0, np.pi)
        sample = RigidTransform(axis_angle_matrix(axis, angle), t_rand, validate=False)
        if biased:
            near_idx = int(np.argmin([n["chamfer"] for n in nodes]))
        else:
            near_idx = int(np.argmin([_pose_distance(n["pose"], sample) for n in nodes]))
        near = nodes[near_idx]
        new_pose = _clamped_step(near["pose"], sample, config)

        child = near["sim"].copy()
        try:
            child.run(config.action_frames, {fid: new_pose})
        except SimulationDivergedError:
            continue
        cloud = observe(child)
        ch = chamfer_distance(cloud, goal_cloud)
        nodes.append({"sim": child, "pose": new_pose, "chamfer": ch, "parent": near_idx})
        result.best_chamfer = min(result.best_chamfer, ch)
        if ch <= config.tolerance:
            path = []
            idx = len(nodes) - 1
            while idx > 0:
                path.append(nodes[idx]["pose"])
                idx = nodes[idx]["parent"]
            result.success = True
            result.path = path[::-1]
            result.final_chamfer = ch
            break
    result.nodes_expanded = len(nodes) - 1
    result.wall_time = time.monotonic() - t_start
    return result


def replay_plan(
    sim: Simulator,
    path: list[RigidTransform],
    config: RrtConfig,
    camera: CameraModel,
    frame: RigidTransform,
    goal_cloud: PointCloud,
) -> float:
    """Execute a plan open-loop from the start state; returns the final Chamfer."""
    fid = sim.state.attachments[0].frame_id
    for pose in path:
        sim.run(config.action_frames, {fid: pose})
    raw = render_partial_cloud(sim.state, sim.mesh, camera)
    cloud = PointCloud(preprocess_observation(raw, frame, config.n_points).points)
    return chamfer_distance(cloud, goal_cloud)
