"""Object-centric reference frame construction from a point cloud."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateGeometryError, InvalidInputError
from .pointcloud import PointCloud
from .rotations import RigidTransform


def object_frame(cloud: PointCloud, gravity_up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Object-centric frame: origin at the bounding-box center, z up, y principal.

    The y-axis is the dominant eigenvector of the point covariance (sign chosen
    to correlate positively with the longest bounding-box edge direction),
    projected orthogonal to z; x = y × z. Returned transform maps object-frame
    coordinates into world coordinates.
    """
    pts = cloud.points
    if pts.shape[0] < 3:
        raise InvalidInputError("object_frame needs at least 3 points")
    z = np.asarray(gravity_up, dtype=np.float64)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise InvalidInputError("gravity_up must be non-zero")
    z = z / nz

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    origin = 0.5 * (lo + hi)

    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    y = eigvecs[:, -1]

    # orient along the longest bounding-box edge
    extents = hi - lo
    edge_dir = np.zeros(3)
    edge_dir[int(np.argmax(extents))] = 1.0
    if y @ edge_dir < 0.0:
        y = -y

    y = y - (y @ z) * z
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        raise DegenerateGeometryError("principal axis is (anti)parallel to gravity")
    y = y / ny
    x = np.cross(y, z)
    rotation = np.stack([x, y, z], axis=1)
    return RigidTransform(rotation, origin, validate=False)
