"""Tissue wrapping: bimanual servo toward a goal cylinder, ray-cast coverage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import PointCloud, RigidTransform, object_frame
from ..sensing import CameraModel, preprocess_observation, render_partial_cloud
from ..servo import ServoConfig, ServoResult, grasp_with_selector, servo_loop
from ..softbody import Simulator, TetMesh
from .goals import WrapGoal


def cylinder_surface_points(goal: WrapGoal, radius, n_axial, n_circ) -> np.ndarray:
    u, v = goal.basis()
    stations = np.linspace(-goal.length / 2.0, goal.length / 2.0, n_axial)
    angles = (np.arange(n_circ) + 0.5) / n_circ * 2.0 * np.pi
    pts = []
    for s in stations:
        for t in angles:
            pts.append(goal.center + s * goal.axis + radius * (np.cos(t) * u + np.sin(t) * v))
    return np.asarray(pts)


def wrap_goal(goal: WrapGoal, n_axial: int = 24, n_circ: int = 48) -> PointCloud:
    """Goal cloud: cylinder at the target pose whose circumference equals the
    tissue length (radius = tissue_length / 2π)."""
    return PointCloud(cylinder_surface_points(goal, goal.goal_radius, n_axial, n_circ))


def _ray_hits_triangles(origins, directions, tri_verts, max_len) -> np.ndarray:
    """Möller-Trumbore: does each ray hit any triangle within max_len."""
    hit = np.zeros(len(origins), dtype=bool)
    v0 = tri_verts[:, 0]
    e1 = tri_verts[:, 1] - v0
    e2 = tri_verts[:, 2] - v0
    for t in range(len(tri_verts)):
        remaining = ~hit
        if not remaining.any():
            break
        o = origins[remaining]
        d = directions[remaining]
        p = np.cross(d, e2[t])
        det = p @ e1[t]
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o - v0[t]
        u = (s * p).sum(axis=1) * inv
        q = np.cross(s, np.broadcast_to(e1[t], s.shape))
        v = (q * d).sum(axis=1) * inv
        dist = (q @ e2[t]) * inv
        good = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (dist > 1e-9) & (dist <= max_len)
        idx = np.nonzero(remaining)[0][good]
        hit[idx] = True
    return hit


def score_wrap(
    mesh: TetMesh,
    positions: np.ndarray,
    goal: WrapGoal,
    n_rays: int = 2000,
) -> float:
    """Coverage percent: fraction of outward-normal rays from the target
    cylinder surface that hit the tissue within the wrap-gap bound."""
    n_circ = 50
    n_axial = max(1, n_rays // n_circ)
    u, v = goal.basis()
    stations = np.linspace(-goal.length / 2.0, goal.length / 2.0, n_axial)
    angles = (np.arange(n_circ) + 0.5) / n_circ * 2.0 * np.pi
    origins, dirs = [], []
    for s in stations:
        for t in angles:
            normal = np.cos(t) * u + np.sin(t) * v
            origins.append(goal.center + s * goal.axis + goal.radius * normal)
            dirs.append(normal)
    origins = np.asarray(origins)
    dirs = np.asarray(dirs)
    tris = positions[mesh.surface]
    hits = _ray_hits_triangles(origins, dirs, tris, goal.gap_bound)
    return 100.0 * float(hits.mean())


@dataclass
class WrapResult:
    coverage_percent: float
    servo_result: ServoResult | None = None
    aligned: bool = False


def run_wrap(
    sim: Simulator,
    policy,
    selector,
    goal: WrapGoal,
    config: ServoConfig,
    camera: CameraModel,
    align_frames: int = 30,
) -> WrapResult:
    """Two-phase script: rigid centroid alignment, then one bimanual servo."""
    frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
    goal_world = wrap_goal(goal)
    goal_cloud = preprocess_observation(goal_world, frame, config.n_points)

    frame_ids, _ = grasp_with_selector(sim, selector, goal_cloud, config, camera, frame)

    # phase 1: translate both grippers so the tissue centroid meets the target
    centroid = sim.full_cloud().points.mean(axis=0)
    delta = goal.center - centroid
    targets = {
        fid: RigidTransform(pose.rotation, pose.translation + delta, validate=False)
        for fid, pose in sim.grasp_poses().items()
    }
    sim.run(align_frames, targets)

    # phase 2: bimanual shape servo toward the goal cylinder cloud
    result = servo_loop(sim, policy, frame_ids, goal_cloud, config, camera, frame)
    coverage = score_wrap(sim.mesh, sim.state.positions, goal)
    return WrapResult(coverage, result, aligned=True)
