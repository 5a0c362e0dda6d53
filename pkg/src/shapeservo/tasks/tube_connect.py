"""Tube connecting: two single-arm servo runs toward half-tube goal clouds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidCurveError
from ..geometry import PointCloud, discrete_frechet, object_frame
from ..sensing import CameraModel, preprocess_observation, render_partial_cloud
from ..servo import ServoConfig, ServoResult, run_servo
from ..softbody import Simulator, TetMesh
from .goals import CurveGoal


def _arclength_resample(points: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n)
    out = np.empty((n, 3))
    for i, t in enumerate(targets):
        j = min(np.searchsorted(s, t, side="right") - 1, len(seg) - 1)
        alpha = (t - s[j]) / seg[j] if seg[j] > 0 else 0.0
        out[i] = points[j] * (1 - alpha) + points[j + 1] * alpha
    return out


def _check_curvature(points: np.ndarray, tube_radius: float) -> None:
    for i in range(1, len(points) - 1):
        a, b, c = points[i - 1], points[i], points[i + 1]
        ab, bc, ca = np.linalg.norm(a - b), np.linalg.norm(b - c), np.linalg.norm(c - a)
        area2 = np.linalg.norm(np.cross(b - a, c - a))
        if area2 < 1e-14:
            continue  # collinear: infinite radius
        circumradius = ab * bc * ca / (2.0 * area2)
        if circumradius < tube_radius:
            raise InvalidCurveError(
                f"curve self-intersects when swept: curvature radius {circumradius:.4f} "
                f"< tube radius {tube_radius:.4f} at vertex {i}"
            )


def _parallel_transport_frames(points: np.ndarray):
    tangents = np.gradient(points, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    normal = np.array([0.0, 0.0, 1.0])
    if abs(tangents[0] @ normal) > 0.9:
        normal = np.array([1.0, 0.0, 0.0])
    normal = normal - (normal @ tangents[0]) * tangents[0]
    normal /= np.linalg.norm(normal)
    frames = []
    for i in range(len(points)):
        if i:
            normal = normal - (normal @ tangents[i]) * tangents[i]
            normal /= np.linalg.norm(normal)
        binormal = np.cross(tangents[i], normal)
        frames.append((normal, binormal))
    return frames


def sweep_tube_cloud(points: np.ndarray, radius: float, n_axial: int, n_circ: int) -> PointCloud:
    """Uniform surface samples of a circle swept along a polyline."""
    center = _arclength_resample(points, n_axial)
    frames = _parallel_transport_frames(center)
    angles = np.linspace(0.0, 2.0 * np.pi, n_circ, endpoint=False)
    pts = []
    for c, (n, b) in zip(center, frames):
        for t in angles:
            pts.append(c + radius * (np.cos(t) * n + np.sin(t) * b))
    return PointCloud(np.asarray(pts))


def tube_connect_goals(
    curve: CurveGoal, n_axial: int = 16, n_circ: int = 16
) -> tuple[PointCloud, PointCloud]:
    """Split the swept goal tube at its arc-length midpoint into two half goals."""
    radius = curve.diameter / 2.0
    _check_curvature(curve.points, radius)
    dense = _arclength_resample(curve.points, 129)
    first, second = dense[:65], dense[64:]
    return (
        sweep_tube_cloud(first, radius, n_axial, n_circ),
        sweep_tube_cloud(second, radius, n_axial, n_circ),
    )


# ------------------------------------------------------------------ scoring


def tube_backbone(mesh: TetMesh, positions: np.ndarray, n_slices: int = 20) -> np.ndarray:
    """Centroid-per-cross-section skeleton using the rest axial coordinate.

    Tube meshes are extruded along y, so rest-y bins identify cross-sections
    and index correspondence carries them through deformation.
    """
    surf = mesh.surface_nodes
    axial = mesh.nodes[surf, 1]
    edges = np.linspace(axial.min() - 1e-12, axial.max() + 1e-12, n_slices + 1)
    backbone = []
    for i in range(n_slices):
        inside = (axial >= edges[i]) & (axial < edges[i + 1])
        if inside.any():
            backbone.append(positions[surf[inside]].mean(axis=0))
    return np.asarray(backbone)


def tube_end_ring(mesh: TetMesh, positions: np.ndarray, end: str) -> np.ndarray:
    """Deformed positions of the end-cap ring nodes ('min' or 'max' rest-y)."""
    surf = mesh.surface_nodes
    axial = mesh.nodes[surf, 1]
    extreme = axial.min() if end == "min" else axial.max()
    ring = surf[np.abs(axial - extreme) <= 0.5 * mesh.resolution]
    return positions[ring]


@dataclass
class TubeConnectResult:
    end_gap: float
    total_frechet: float
    servo_results: list[ServoResult] = field(default_factory=list)


def score_tube_connect(
    sims: tuple[Simulator, Simulator],
    free_ends: tuple[str, str],
    curve_halves: tuple[np.ndarray, np.ndarray],
) -> tuple[float, float]:
    """(end gap between free-end ring centers, summed backbone Fréchet)."""
    centers = []
    frechet_total = 0.0
    for sim, end, half in zip(sims, free_ends, curve_halves):
        ring = tube_end_ring(sim.mesh, sim.state.positions, end)
        centers.append(ring.mean(axis=0))
        backbone = tube_backbone(sim.mesh, sim.state.positions)
        frechet_total += discrete_frechet(backbone, _arclength_resample(half, len(backbone)))
    gap = float(np.linalg.norm(centers[0] - centers[1]))
    return gap, frechet_total


def run_tube_connect(
    sims: tuple[Simulator, Simulator],
    policies,
    selectors,
    curve: CurveGoal,
    config: ServoConfig,
    camera: CameraModel,
) -> TubeConnectResult:
    """Two independent single-arm servo problems, one per tube.

    Goal halves are assigned to tubes by which half's outer end lies nearest
    the tube's fixed end; each tube then servos toward its own half-tube cloud.
    """
    dense = _arclength_resample(curve.points, 129)
    halves = (dense[:65], dense[64:])
    goal_clouds = tube_connect_goals(curve)

    # fixed-end positions per sim (fixed_face is y_min or y_max by construction)
    fixed_pos = [sim.mesh.nodes[sim.mesh.fixed].mean(axis=0) for sim in sims]
    outer_ends = (halves[0][0], halves[1][-1])
    d_direct = np.linalg.norm(fixed_pos[0] - outer_ends[0]) + np.linalg.norm(
        fixed_pos[1] - outer_ends[1]
    )
    d_swapped = np.linalg.norm(fixed_pos[0] - outer_ends[1]) + np.linalg.norm(
        fixed_pos[1] - outer_ends[0]
    )
    order = (0, 1) if d_direct <= d_swapped else (1, 0)

    results = []
    assigned_halves = []
    free_ends = []
    for sim_idx, half_idx in enumerate(order):
        sim = sims[sim_idx]
        policy = policies[sim_idx] if isinstance(policies, (tuple, list)) else policies
        selector = selectors[sim_idx] if isinstance(selectors, (tuple, list)) else selectors
        frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
        goal_world = goal_clouds[half_idx]
        goal_cloud = preprocess_observation(goal_world, frame, config.n_points)
        results.append(run_servo(sim, policy, selector, goal_cloud, config, camera, frame))
        assigned_halves.append(halves[half_idx])
        axial = sim.mesh.nodes[sim.mesh.surface_nodes, 1]
        fixed_y = sim.mesh.nodes[sim.mesh.fixed, 1].mean()
        free_ends.append("max" if abs(fixed_y - axial.min()) < abs(fixed_y - axial.max()) else "min")

    gap, frechet = score_tube_connect(sims, tuple(free_ends), tuple(assigned_halves))
    return TubeConnectResult(gap, frechet, results)
