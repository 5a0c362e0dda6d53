"""Random-trajectory generation on the soft-body simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GenerationError, GraspMissError, SimulationDivergedError
from ..geometry import (
    PointCloud,
    RigidTransform,
    axis_angle_matrix,
    furthest_point_sample,
    interpolate_pose,
    rot6d_decode,
    rot6d_encode,
)
from ..sensing import CameraModel, make_camera, render_partial_cloud
from ..softbody import Material, PrimitiveSpec, Simulator, build_primitive
from .container import read_dataset, write_dataset


@dataclass
class Checkpoint:
    partial: np.ndarray  # (raw_points, 3) world coords
    full: np.ndarray  # (surface_nodes, 3)
    mp: np.ndarray  # (arms, 3) current grasped-node positions
    poses: list[RigidTransform]  # per arm


@dataclass
class TrajectoryRecord:
    object_id: int
    trajectory_id: int
    spec: PrimitiveSpec
    material: Material
    fixed_face: str
    grasp_points: np.ndarray  # (arms, 3) rest-geometry grasp locations
    rest_partial: np.ndarray  # (raw_points, 3) render of the undeformed object
    checkpoints: list[Checkpoint] = field(default_factory=list)

    @property
    def arms(self) -> int:
        return self.grasp_points.shape[0]


@dataclass
class GenerationSettings:
    """Knobs for trajectory generation; defaults follow the desk profile."""

    arms: int = 1
    trajectories_per_grasp: int = 5
    checkpoint_stride: int = 15
    checkpoints: int = 5  # includes the starting checkpoint
    raw_points: int = 512
    fixed_face: str = "x_min"
    settle_frames: int = 20
    translation_factor: float = 0.5  # ball radius as fraction of characteristic length
    max_rotation: float = np.radians(60.0)
    dt: float = 0.005
    gravity: tuple = (0.0, 0.0, -9.81)
    camera_distance: float = 0.5
    camera_azimuth: float = 0.0
    camera_elevation: float = np.radians(45.0)
    camera_resolution: int = 128
    max_resamples: int = 10


def _pad_fps(points: np.ndarray, n: int) -> np.ndarray:
    if points.shape[0] < n:
        points = points[np.arange(n) % points.shape[0]]
    return furthest_point_sample(PointCloud(points), n).points


def _sample_grasp_points(mesh, settings: GenerationSettings, rng) -> np.ndarray:
    surface = mesh.surface_nodes
    free = np.setdiff1d(surface, mesh.fixed)
    if len(free) == 0:
        raise GenerationError("no free surface nodes to grasp")
    min_sep = 2.0 * 1.5 * mesh.resolution
    first = mesh.nodes[free[rng.integers(len(free))]]
    if settings.arms == 1:
        return first[None, :]
    for _ in range(200):
        second = mesh.nodes[free[rng.integers(len(free))]]
        if np.linalg.norm(second - first) >= min_sep:
            return np.stack([first, second])
    raise GenerationError("could not find a separated bimanual grasp pair")


def _sample_target(pose: RigidTransform, charlen: float, settings: GenerationSettings, rng) -> RigidTransform:
    radius = settings.translation_factor * charlen
    vec = rng.normal(size=3)
    vec /= np.linalg.norm(vec)
    t = pose.translation + vec * radius * rng.uniform() ** (1.0 / 3.0)
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, settings.max_rotation)
    rot = axis_angle_matrix(axis, angle) @ pose.rotation
    return RigidTransform(rot, t, validate=False)


def _camera_for(settings: GenerationSettings, target=(0.0, 0.0, 0.0)) -> CameraModel:
    return make_camera(
        target=target,
        distance=settings.camera_distance,
        azimuth=settings.camera_azimuth,
        elevation=settings.camera_elevation,
        width=settings.camera_resolution,
        height=settings.camera_resolution,
    )


def _record_checkpoint(sim: Simulator, camera, frame_ids, anchor_nodes, settings) -> Checkpoint:
    raw = render_partial_cloud(sim.state, sim.mesh, camera)
    partial = _pad_fps(raw.points, settings.raw_points)
    full = sim.full_cloud().points
    mp = np.stack([sim.state.positions[a] for a in anchor_nodes])
    poses = [sim.state.grasp_frames[fid] for fid in frame_ids]
    return Checkpoint(partial, full, mp, poses)


def generate_trajectories(
    population: list[tuple[PrimitiveSpec, Material]],
    settings: GenerationSettings,
    rng_seed: int,
    object_id_offset: int = 0,
) -> list[TrajectoryRecord]:
    """Deterministic random-deformation trajectories for each object config.

    Per config: one random surface grasp (pair), then ``trajectories_per_grasp``
    random end-effector targets executed from rest, observed every
    ``checkpoint_stride`` integrator frames. Diverged runs are resampled up to
    ``max_resamples`` times before raising GenerationError. Seeding is
    per-object, so splitting a population across workers (with matching
    ``object_id_offset``) reproduces the sequential result.
    """
    if not population:
        raise GenerationError("population is empty")
    records: list[TrajectoryRecord] = []
    camera = _camera_for(settings)
    for rel_id, (spec, material) in enumerate(population):
        obj_id = object_id_offset + rel_id
        mesh, _ = build_primitive(spec, material, settings.fixed_face)
        grasp_rng = np.random.default_rng([rng_seed, obj_id, 0xA11CE])
        grasp_points = _sample_grasp_points(mesh, settings, grasp_rng)
        charlen = spec.characteristic_length()

        base_sim = Simulator(mesh, material, dt=settings.dt, gravity=settings.gravity)
        rest_raw = render_partial_cloud(base_sim.state, base_sim.mesh, camera)
        rest_partial = _pad_fps(rest_raw.points, settings.raw_points)
        anchor_nodes = [
            int(mesh.surface_nodes[np.argmin(np.linalg.norm(mesh.nodes[mesh.surface_nodes] - g, axis=1))])
            for g in grasp_points
        ]

        for traj_idx in range(settings.trajectories_per_grasp):
            for attempt in range(settings.max_resamples + 1):
                rng = np.random.default_rng([rng_seed, obj_id, traj_idx, attempt])
                try:
                    sim = base_sim.copy()
                    frame_ids = [sim.grasp(g) for g in grasp_points]
                    if settings.settle_frames:
                        sim.settle(settings.settle_frames)
                    targets = {
                        fid: _sample_target(sim.state.grasp_frames[fid], charlen, settings, rng)
                        for fid in frame_ids
                    }
                    record = TrajectoryRecord(
                        obj_id,
                        traj_idx,
                        spec,
                        material,
                        settings.fixed_face,
                        grasp_points,
                        rest_partial,
                    )
                    starts = {fid: sim.state.grasp_frames[fid] for fid in frame_ids}
                    record.checkpoints.append(
                        _record_checkpoint(sim, camera, frame_ids, anchor_nodes, settings)
                    )
                    segments = settings.checkpoints - 1
                    for seg in range(1, segments + 1):
                        frac = seg / segments
                        waypoint = {
                            fid: interpolate_pose(starts[fid], targets[fid], frac) for fid in frame_ids
                        }
                        sim.run(settings.checkpoint_stride, waypoint)
                        record.checkpoints.append(
                            _record_checkpoint(sim, camera, frame_ids, anchor_nodes, settings)
                        )
                    records.append(record)
                    break
                except (SimulationDivergedError, GraspMissError):
                    continue
            else:
                raise GenerationError(
                    f"object config {obj_id} diverged {settings.max_resamples + 1} times"
                )
    return records


# ------------------------------------------------------------------ storage


def save_trajectories(path, records: list[TrajectoryRecord]) -> None:
    """One container per object config batch; records must share one mesh/spec."""
    first = records[0]
    samples = []
    for rec in records:
        for ck in rec.checkpoints:
            samples.append(
                {
                    "partial": ck.partial,
                    "full": ck.full,
                    "mp": ck.mp,
                    "poses": np.stack([p.matrix() for p in ck.poses]),
                }
            )
    mat = first.material
    metadata = {
        "kind": "trajectories",
        "object_id": first.object_id,
        "spec": {"kind": first.spec.kind, "dims": first.spec.dims, "resolution": first.spec.resolution},
        "material": {
            "youngs_modulus": mat.youngs_modulus,
            "poisson_ratio": mat.poisson_ratio,
            "density": mat.density,
            "rayleigh_mass": mat.rayleigh_mass,
            "rayleigh_stiffness": mat.rayleigh_stiffness,
        },
        "fixed_face": first.fixed_face,
        "grasp_points": first.grasp_points.tolist(),
        "rest_partial": first.rest_partial.tolist(),
        "checkpoints_per_trajectory": len(first.checkpoints),
        "trajectory_ids": [rec.trajectory_id for rec in records],
    }
    write_dataset(path, samples, metadata)


def load_trajectories(path) -> list[TrajectoryRecord]:
    header, samples = read_dataset(path)
    meta = header["metadata"]
    spec = PrimitiveSpec(meta["spec"]["kind"], meta["spec"]["dims"], meta["spec"]["resolution"])
    material = Material(**meta["material"])
    grasp_points = np.asarray(meta["grasp_points"], dtype=np.float64)
    rest_partial = np.asarray(meta["rest_partial"], dtype=np.float64)
    per = meta["checkpoints_per_trajectory"]
    records = []
    for t, traj_id in enumerate(meta["trajectory_ids"]):
        rec = TrajectoryRecord(
            meta["object_id"], traj_id, spec, material, meta["fixed_face"], grasp_points, rest_partial
        )
        for ck in samples[t * per : (t + 1) * per]:
            # float32 storage leaves rotations slightly non-orthonormal;
            # re-project so inverse-by-transpose composition is exact again
            poses = [
                RigidTransform(
                    rot6d_decode(rot6d_encode(m[:3, :3].astype(np.float64))),
                    m[:3, 3].astype(np.float64),
                    validate=False,
                )
                for m in ck["poses"]
            ]
            rec.checkpoints.append(
                Checkpoint(
                    ck["partial"].astype(np.float64),
                    ck["full"].astype(np.float64),
                    ck["mp"].astype(np.float64),
                    poses,
                )
            )
        records.append(rec)
    return records
