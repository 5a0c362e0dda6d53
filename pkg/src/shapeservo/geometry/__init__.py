"""Pure geometric primitives and metrics shared by all other modules."""

from .curves import discrete_frechet
from .frames import object_frame
from .planes import Plane, fit_dominant_plane_ransac
from .pointcloud import (
    PointCloud,
    chamfer_distance,
    furthest_point_sample,
    furthest_point_sample_indices,
    node_distance,
)
from .rotations import (
    RigidTransform,
    axis_angle_matrix,
    geodesic_distance,
    interpolate_pose,
    random_rotation,
    rot6d_decode,
    rot6d_encode,
    rotation_log,
)

__all__ = [
    "PointCloud",
    "Plane",
    "RigidTransform",
    "axis_angle_matrix",
    "chamfer_distance",
    "discrete_frechet",
    "fit_dominant_plane_ransac",
    "furthest_point_sample",
    "furthest_point_sample_indices",
    "geodesic_distance",
    "interpolate_pose",
    "node_distance",
    "object_frame",
    "rotation_log",
    "random_rotation",
    "rot6d_decode",
    "rot6d_encode",
]
