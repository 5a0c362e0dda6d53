"""Point clouds and the cloud-to-cloud metrics used throughout the workbench."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


class PointCloud:
    """Ordered set of N 3D points with optional named scalar channels.

    ``points`` is an (N, 3) float64 array in meters. ``channels`` maps a
    channel name to an (N,) array. Index order is meaningful: simulator full
    clouds rely on it for node correspondence.
    """

    __slots__ = ("points", "channels")

    def __init__(self, points, channels=None):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise InvalidInputError(f"points must be (N, 3) with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        self.points = pts
        self.channels: dict[str, np.ndarray] = {}
        if channels:
            for name, values in channels.items():
                vals = np.asarray(values, dtype=np.float64)
                if vals.shape != (pts.shape[0],):
                    raise InvalidInputError(
                        f"channel {name!r} has shape {vals.shape}, expected ({pts.shape[0]},)"
                    )
                self.channels[name] = vals

    def __len__(self):
        return self.points.shape[0]

    def select(self, indices) -> "PointCloud":
        """Sub-cloud at ``indices``, carrying channels along."""
        idx = np.asarray(indices, dtype=np.intp)
        return PointCloud(
            self.points[idx],
            {name: vals[idx] for name, vals in self.channels.items()},
        )

    def transformed(self, transform) -> "PointCloud":
        """Cloud with ``transform`` applied to every point (channels kept)."""
        return PointCloud(transform.apply(self.points), dict(self.channels))

    def as_matrix(self) -> np.ndarray:
        """(3 + K, N) matrix: xyz rows then channels in insertion order."""
        rows = [self.points.T]
        for vals in self.channels.values():
            rows.append(vals[None, :])
        return np.concatenate(rows, axis=0)


def _nn_sq(a: np.ndarray, b: np.ndarray, block: int = 256) -> np.ndarray:
    """Per-point squared distance from each point of ``a`` to its nearest in ``b``.

    Uses explicit differences (not the matmul expansion) so results agree
    bitwise with a naive per-pair oracle; blocked to bound memory at N <= 4096.
    """
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], block):
        chunk = a[start : start + block]
        d = np.sum((chunk[:, None, :] - b[None, :, :]) ** 2, axis=2)
        out[start : start + block] = d.min(axis=1)
    return out


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric sum of squared nearest-neighbor distances between two clouds."""
    if len(a) == 0 or len(b) == 0:
        raise InvalidInputError("chamfer_distance requires non-empty clouds")
    return float(np.sum(_nn_sq(a.points, b.points)) + np.sum(_nn_sq(b.points, a.points)))


def node_distance(a: PointCloud, b: PointCloud) -> float:
    """Mean squared distance over index-corresponded points.

    Requires |a| == |b|; index i of ``a`` corresponds to index i of ``b``
    (simulator particle correspondence).
    """
    if len(a) != len(b):
        raise InvalidInputError(f"node_distance size mismatch: {len(a)} vs {len(b)}")
    diff = a.points - b.points
    return float(np.sum(np.sum(diff * diff, axis=1)) / len(b))


def furthest_point_sample_indices(points: np.ndarray, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest-point sampling; returns the k selected indices in order.

    The first pick is ``seed_index``; each later pick maximizes its minimum
    distance to the already-selected set, ties broken by lowest index.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    if not 0 <= seed_index < n:
        raise InvalidInputError(f"seed_index out of range: {seed_index}")
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = seed_index
    min_sq = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_sq))  # argmax returns the lowest index on ties
        chosen[i] = nxt
        np.minimum(min_sq, np.sum((pts - pts[nxt]) ** 2, axis=1), out=min_sq)
    return chosen


def furthest_point_sample(cloud: PointCloud, k: int, seed_index: int = 0) -> PointCloud:
    """FPS-downsampled cloud of exactly k points, channels carried along."""
    return cloud.select(furthest_point_sample_indices(cloud.points, k, seed_index))
