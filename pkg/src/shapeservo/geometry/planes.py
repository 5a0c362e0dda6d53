"""Planes and RANSAC dominant-plane fitting."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateGeometryError, InvalidInputError
from .pointcloud import PointCloud


class Plane:
    """Oriented plane: points p with normal·p - offset > 0 are on the good side."""

    __slots__ = ("normal", "offset")

    def __init__(self, normal, offset: float):
        n = np.asarray(normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or norm < 1e-12:
            raise InvalidInputError("plane normal must be a non-zero 3-vector")
        self.normal = n / norm
        self.offset = float(offset) / norm

    @classmethod
    def from_point_normal(cls, point, normal) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        return cls(n, float(n @ np.asarray(point, dtype=np.float64)))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def shifted(self, amount: float) -> "Plane":
        """Plane translated by ``amount`` along its normal (toward good side if > 0)."""
        return Plane(self.normal, self.offset + amount)

    def __repr__(self):
        return f"Plane(n={self.normal.round(4).tolist()}, d={self.offset:.4g})"


def _lsq_plane(points: np.ndarray) -> Plane:
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[-1] > 0 and s[-2] < 1e-12 * max(1.0, s[0]):
        raise DegenerateGeometryError("inlier set is collinear")
    normal = vt[-1]
    return Plane.from_point_normal(centroid, normal)


def fit_dominant_plane_ransac(
    cloud: PointCloud,
    iterations: int = 100,
    inlier_tol: float = 0.005,
    rng_seed: int = 0,
) -> Plane:
    """RANSAC plane fit: best 3-point candidate by inlier count, refit to inliers.

    Deterministic given (cloud, iterations, inlier_tol, rng_seed). Raises
    DegenerateGeometryError when every sampled triple is collinear.
    """
    pts = cloud.points
    n = pts.shape[0]
    if n < 3:
        raise InvalidInputError("RANSAC needs at least 3 points")
    rng = np.random.default_rng(rng_seed)
    best_count = -1
    best_inliers = None
    for _ in range(iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        v1 = pts[j] - pts[i]
        v2 = pts[k] - pts[i]
        normal = np.cross(v1, v2)
        norm = np.linalg.norm(normal)
        if norm < 1e-14:
            continue
        normal = normal / norm
        dist = np.abs((pts - pts[i]) @ normal)
        inliers = dist <= inlier_tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None:
        raise DegenerateGeometryError("all sampled candidate triples were collinear")
    return _lsq_plane(pts[best_inliers])
