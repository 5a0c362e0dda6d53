"""Synthetic depth sensing: z-buffer rasterization and observation preprocessing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyViewError, InvalidInputError
from .geometry import PointCloud, RigidTransform, furthest_point_sample
from .softbody.mesh import TetMesh
from .softbody.simulator import SimState


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera. ``pose`` maps camera coordinates to world.

    Camera frame: +z forward, +x right, +y down (image rows).
    """

    pose: RigidTransform
    hfov: float = np.radians(60.0)
    vfov: float = np.radians(60.0)
    width: int = 256
    height: int = 256
    near: float = 0.05
    far: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.hfov < np.pi and 0.0 < self.vfov < np.pi):
            raise InvalidInputError("field of view must be in (0, pi)")
        if self.width < 16 or self.height < 16:
            raise InvalidInputError("camera resolution must be at least 16x16")

    def intrinsics(self):
        fx = (self.width / 2.0) / np.tan(self.hfov / 2.0)
        fy = (self.height / 2.0) / np.tan(self.vfov / 2.0)
        return fx, fy, self.width / 2.0, self.height / 2.0


def make_camera(
    target=(0.0, 0.0, 0.0),
    distance: float = 0.5,
    azimuth: float = 0.0,
    elevation: float = np.radians(45.0),
    width: int = 256,
    height: int = 256,
    fov: float = np.radians(60.0),
) -> CameraModel:
    """Camera orbiting ``target`` at the given range/azimuth/elevation, looking at it."""
    target = np.asarray(target, dtype=np.float64)
    offset = distance * np.array(
        [np.cos(elevation) * np.cos(azimuth), np.cos(elevation) * np.sin(azimuth), np.sin(elevation)]
    )
    eye = target + offset
    forward = (target - eye) / np.linalg.norm(target - eye)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=1)
    return CameraModel(
        RigidTransform(rotation, eye, validate=False), fov, fov, width, height
    )


def render_partial_cloud(state: SimState, mesh: TetMesh, camera: CameraModel) -> PointCloud:
    """Rasterize the surface triangles; one world-space point per covered pixel.

    Front-most surfaces only (z-buffer). Deterministic; points are emitted in
    row-major pixel order. Raises EmptyViewError when nothing is visible.
    """
    verts_cam = camera.pose.inverse().apply(state.positions)
    tris = mesh.surface
    fx, fy, cx, cy = camera.intrinsics()
    w, h = camera.width, camera.height
    zbuf = np.full((h, w), np.inf)

    tri_cam = verts_cam[tris]  # (T, 3, 3)
    z = tri_cam[:, :, 2]
    ok = np.all(z > camera.near, axis=1)  # triangles crossing the near plane are skipped
    u = fx * tri_cam[:, :, 0] / z + cx
    v = fy * tri_cam[:, :, 1] / z + cy

    for t in np.nonzero(ok)[0]:
        ut, vt, zt = u[t], v[t], z[t]
        lo_u = max(int(np.floor(ut.min() - 0.5)), 0)
        hi_u = min(int(np.ceil(ut.max() - 0.5)), w - 1)
        lo_v = max(int(np.floor(vt.min() - 0.5)), 0)
        hi_v = min(int(np.ceil(vt.max() - 0.5)), h - 1)
        if lo_u > hi_u or lo_v > hi_v:
            continue
        area = (ut[1] - ut[0]) * (vt[2] - vt[0]) - (ut[2] - ut[0]) * (vt[1] - vt[0])
        if abs(area) < 1e-12:
            continue
        px, py = np.meshgrid(
            np.arange(lo_u, hi_u + 1) + 0.5, np.arange(lo_v, hi_v + 1) + 0.5
        )
        w0 = ((ut[1] - px) * (vt[2] - py) - (ut[2] - px) * (vt[1] - py)) / area
        w1 = ((ut[2] - px) * (vt[0] - py) - (ut[0] - px) * (vt[2] - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        inv_z = w0 / zt[0] + w1 / zt[1] + w2 / zt[2]
        depth = np.where(inside & (inv_z > 0), 1.0 / np.maximum(inv_z, 1e-300), np.inf)
        depth[depth > camera.far] = np.inf
        patch = zbuf[lo_v : hi_v + 1, lo_u : hi_u + 1]
        np.minimum(patch, depth, out=patch)

    vs, us = np.nonzero(np.isfinite(zbuf))
    if len(vs) == 0:
        raise EmptyViewError("no object pixels in view")
    depth = zbuf[vs, us]
    x = (us + 0.5 - cx) / fx * depth
    y = (vs + 0.5 - cy) / fy * depth
    pts_cam = np.stack([x, y, depth], axis=1)
    return PointCloud(camera.pose.apply(pts_cam))


def preprocess_observation(
    raw: PointCloud,
    frame: RigidTransform,
    n_points: int,
    manipulation_points=None,
    k_nearest: int = 50,
) -> PointCloud:
    """Object-frame observation: FPS-downsampled cloud plus manipulation-point masks.

    Transforms ``raw`` (and the manipulation points) into the object-centric
    frame, downsamples to ``n_points`` by farthest-point sampling (padding by
    deterministic resampling-with-replacement when the view is small), then
    appends one binary channel per manipulation point marking its ``k_nearest``
    nearest cloud points.
    """
    inv = frame.inverse()
    pts = inv.apply(raw.points)
    if pts.shape[0] < n_points:
        idx = np.arange(n_points) % pts.shape[0]
        pts = pts[idx]
    cloud = furthest_point_sample(PointCloud(pts), n_points)
    channels = {}
    if manipulation_points is not None:
        for m, world_pt in enumerate(manipulation_points):
            p = inv.apply(np.asarray(world_pt, dtype=np.float64)[None, :])[0]
            dist = np.linalg.norm(cloud.points - p, axis=1)
            order = np.argsort(dist, kind="stable")
            mask = np.zeros(n_points)
            mask[order[: min(k_nearest, n_points)]] = 1.0
            channels[f"mp{m}"] = mask
    return PointCloud(cloud.points, channels)
