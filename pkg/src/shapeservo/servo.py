"""Closed-loop shape servoing: sense, select grasp once, act until convergence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyViewError, InvalidInputError, SimulationDivergedError
from .geometry import (
    PointCloud,
    RigidTransform,
    chamfer_distance,
    node_distance,
    object_frame,
    rotation_log,
)
from .nn.policy import PolicyNet, infer_action
from .sensing import CameraModel, preprocess_observation, render_partial_cloud
from .softbody import Simulator


@dataclass(frozen=True)
class ServoConfig:
    epsilon_translation: float = 0.003  # m
    epsilon_rotation: float = np.radians(2.0)
    max_steps: int = 10
    action_frames: int = 15  # integrator frames per executed action
    settle_frames: int = 20
    n_points: int = 256
    k_nearest: int = 50
    collision_clearance: float | None = None  # default: 2 x grasp radius
    collect_clouds: bool = False  # keep per-step object-frame clouds for plotting

    def __post_init__(self):
        if self.epsilon_translation <= 0 or self.epsilon_rotation <= 0:
            raise InvalidInputError("convergence thresholds must be > 0")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be >= 1")


@dataclass
class ServoResult:
    steps: int
    chamfer_series: list[float]
    termination: str  # converged | max-steps | arm-collision | sim-diverged
    final_cloud: PointCloud | None = None
    final_full_cloud: PointCloud | None = None
    final_node_distance: float | None = None
    final_chamfer: float | None = None
    selected_points: np.ndarray | None = None
    cloud_series: list[np.ndarray] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "termination": self.termination,
            "chamfer_series": self.chamfer_series,
            "final_chamfer": self.final_chamfer,
            "final_node_distance": self.final_node_distance,
        }


def _action_small(actions, config: ServoConfig) -> bool:
    for a in actions:
        if np.linalg.norm(a.translation) >= config.epsilon_translation:
            return False
        if np.linalg.norm(rotation_log(a.rotation)) >= config.epsilon_rotation:
            return False
    return True


def grasp_with_selector(
    sim: Simulator,
    selector,
    goal_cloud: PointCloud,
    config: ServoConfig,
    camera: CameraModel,
    frame: RigidTransform,
) -> tuple[list[int], np.ndarray]:
    """Select manipulation point(s) from the current view and grasp there.

    Selected points are snapped to the nearest surface node before grasping.
    Returns (grasp frame ids, world-space selected points).
    """
    raw0 = render_partial_cloud(sim.state, sim.mesh, camera)
    cur0 = preprocess_observation(raw0, frame, config.n_points)
    picks_obj = np.atleast_2d(selector.select(cur0, goal_cloud))
    picks_world = frame.apply(picks_obj)
    frame_ids = []
    for p in picks_world:
        snapped = sim.mesh.nodes[sim.mesh.surface_nodes][
            np.argmin(np.linalg.norm(sim.mesh.nodes[sim.mesh.surface_nodes] - p, axis=1))
        ]
        frame_ids.append(sim.grasp(snapped))
    if config.settle_frames:
        sim.settle(config.settle_frames)
    return frame_ids, picks_world


def servo_loop(
    sim: Simulator,
    policy: PolicyNet,
    frame_ids: list[int],
    goal_cloud: PointCloud,
    config: ServoConfig,
    camera: CameraModel,
    frame: RigidTransform,
    goal_full_cloud: PointCloud | None = None,
    picks_world: np.ndarray | None = None,
) -> ServoResult:
    """Iterate sense -> infer -> execute on an already-grasped object."""
    goal_matrix = goal_cloud.as_matrix()[:3]
    clearance = (
        config.collision_clearance if config.collision_clearance is not None else 2.0 * sim.grasp_radius
    )
    series: list[float] = []
    clouds: list[np.ndarray] = []
    executed = 0
    termination = "max-steps"
    cur = None
    while True:
        raw = render_partial_cloud(sim.state, sim.mesh, camera)
        mp_world = [sim.attachment_points()[fid] for fid in frame_ids]
        cur = preprocess_observation(raw, frame, config.n_points, mp_world, config.k_nearest)
        series.append(chamfer_distance(PointCloud(cur.points), goal_cloud))
        if config.collect_clouds:
            clouds.append(cur.points.copy())

        actions = infer_action(policy, cur.as_matrix(), goal_matrix)
        if _action_small(actions, config):
            termination = "converged"
            break
        if executed >= config.max_steps:
            termination = "max-steps"
            break
        try:
            sim.apply_action(dict(zip(frame_ids, actions)), frames=config.action_frames)
        except SimulationDivergedError:
            termination = "sim-diverged"
            break
        executed += 1
        if len(frame_ids) == 2:
            poses = sim.grasp_poses()
            gap = np.linalg.norm(
                poses[frame_ids[0]].translation - poses[frame_ids[1]].translation
            )
            if gap < clearance:
                raw = render_partial_cloud(sim.state, sim.mesh, camera)
                cur = preprocess_observation(raw, frame, config.n_points, mp_world, config.k_nearest)
                series.append(chamfer_distance(PointCloud(cur.points), goal_cloud))
                termination = "arm-collision"
                break

    final_full = sim.full_cloud()
    result = ServoResult(
        steps=executed,
        chamfer_series=series,
        termination=termination,
        final_cloud=cur,
        final_full_cloud=final_full,
        final_chamfer=series[-1] if series else None,
        selected_points=picks_world,
        cloud_series=clouds,
    )
    if goal_full_cloud is not None and len(goal_full_cloud) == len(final_full):
        result.final_node_distance = node_distance(final_full, goal_full_cloud)
    return result


def run_servo(
    sim: Simulator,
    policy: PolicyNet,
    selector,
    goal_cloud: PointCloud,
    config: ServoConfig,
    camera: CameraModel,
    frame: RigidTransform | None = None,
    goal_full_cloud: PointCloud | None = None,
) -> ServoResult:
    """Grasp per the selector, then servo until the action magnitude drops
    below the thresholds; counts executed actions only.

    ``goal_cloud`` must already be preprocessed into the object-centric frame
    at the configured size. The frame defaults to the one computed from the
    initial (undeformed) view and is reused for the whole run.
    """
    if len(goal_cloud) != config.n_points:
        raise InvalidInputError("goal cloud size does not match servo n_points")
    if frame is None:
        frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
    frame_ids, picks_world = grasp_with_selector(sim, selector, goal_cloud, config, camera, frame)
    return servo_loop(
        sim, policy, frame_ids, goal_cloud, config, camera, frame, goal_full_cloud, picks_world
    )


# ------------------------------------------------------------------ suites


def goal_from_record(record, config: ServoConfig):
    """(frame, goal cloud, goal full cloud, rebuilt simulator) for one recorded goal."""
    from .softbody import Material, Simulator as Sim, build_primitive

    frame = object_frame(PointCloud(record.rest_partial))
    goal_raw = PointCloud(record.checkpoints[-1].partial)
    goal_cloud = preprocess_observation(goal_raw, frame, config.n_points)
    goal_full = PointCloud(record.checkpoints[-1].full)
    mesh, _ = build_primitive(record.spec, record.material, record.fixed_face)
    sim = Sim(mesh, record.material)
    return frame, goal_cloud, goal_full, sim


def oracle_selector_for(record, frame):
    """Selector returning the recorded grasp points (object frame)."""
    from .nn.manip_point import OracleSelector

    return OracleSelector(frame.inverse().apply(record.grasp_points))


def _quartiles(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "min": float(arr.min()),
        "q25": float(np.percentile(arr, 25)),
        "median": float(np.percentile(arr, 50)),
        "q75": float(np.percentile(arr, 75)),
        "max": float(arr.max()),
        "mean": float(arr.mean()),
    }


def evaluate_suite(
    goal_records,
    policy: PolicyNet,
    selector_provider,
    config: ServoConfig,
    camera: CameraModel,
) -> dict:
    """Run one servo per recorded goal; aggregate box-and-whisker statistics.

    ``selector_provider(record, frame)`` builds the manipulation-point selector
    for each goal (oracle selectors need the recorded grasp). Failed runs are
    recorded by termination reason, never raised.
    """
    per_goal = []
    for record in goal_records:
        frame, goal_cloud, goal_full, sim = goal_from_record(record, config)
        selector = selector_provider(record, frame)
        try:
            result = run_servo(
                sim, policy, selector, goal_cloud, config, camera, frame, goal_full
            )
            row = result.as_dict()
        except (SimulationDivergedError, EmptyViewError) as exc:
            row = {
                "steps": 0,
                "termination": f"error:{type(exc).__name__}",
                "chamfer_series": [],
                "final_chamfer": None,
                "final_node_distance": None,
            }
        row["object_id"] = record.object_id
        row["trajectory_id"] = record.trajectory_id
        per_goal.append(row)

    chamfers = [r["final_chamfer"] for r in per_goal if r["final_chamfer"] is not None]
    nodes = [r["final_node_distance"] for r in per_goal if r["final_node_distance"] is not None]
    steps = [r["steps"] for r in per_goal]
    table = {
        "goals": per_goal,
        "aggregate": {
            "chamfer": _quartiles(chamfers) if chamfers else None,
            "node": _quartiles(nodes) if nodes else None,
            "mean_steps": float(np.mean(steps)) if steps else None,
            "terminations": {
                t: sum(1 for r in per_goal if r["termination"] == t)
                for t in sorted({r["termination"] for r in per_goal})
            },
        },
    }
    return table
