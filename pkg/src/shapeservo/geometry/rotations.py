"""Rigid transforms, the 6D rotation representation, and rotation metrics."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateRotationError, InvalidInputError

_ORTHO_TOL = 1e-6


def _check_rotation(r: np.ndarray, tol: float = _ORTHO_TOL) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got {r.shape}")
    if np.linalg.norm(r.T @ r - np.eye(3)) > tol or np.linalg.det(r) < 0.0:
        raise InvalidInputError("matrix is not a proper rotation")
    return r


class RigidTransform:
    """SE(3) element: 3x3 rotation plus translation in meters."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None, *, validate=True):
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        if validate:
            r = _check_rotation(r)
            if t.shape != (3,) or not np.all(np.isfinite(t)):
                raise InvalidInputError("translation must be a finite 3-vector")
        self.rotation = r
        self.translation = t

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(validate=False)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=None) -> "RigidTransform":
        return cls(axis_angle_matrix(axis, angle), translation, validate=False)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other (apply ``other`` first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            validate=False,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation, validate=False)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __repr__(self):
        return f"RigidTransform(t={self.translation.round(6).tolist()})"


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a (not necessarily unit) axis."""
    u = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise InvalidInputError("rotation axis must be non-zero")
    u = u / norm
    k = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rot6d_encode(rotation: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, column-major (6 scalars)."""
    r = np.asarray(rotation, dtype=np.float64)
    return np.concatenate([r[:, 0], r[:, 1]])


def rot6d_decode(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt decode of the 6D rotation representation.

    b1 = normalize(a1); b2 = normalize(a2 - (b1.a2) b1); b3 = b1 x b2.
    Raises DegenerateRotationError when the two 3-vectors are (near) parallel.
    """
    v = np.asarray(r6, dtype=np.float64).reshape(6)
    a1, a2 = v[:3], v[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-12:
        raise DegenerateRotationError("first 6D vector is zero")
    b1 = a1 / n1
    a2p = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(a2p)
    if n2 < 1e-12 * max(1.0, np.linalg.norm(a2)) or n2 == 0.0:
        raise DegenerateRotationError("6D vectors are parallel")
    b2 = a2p / n2
    return np.stack([b1, b2, np.cross(b1, b2)], axis=1)


def geodesic_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle in radians of the relative rotation r1ᵀ r2, clamped to [0, π]."""
    r1 = _check_rotation(r1)
    r2 = _check_rotation(r2)
    cos = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector (axis * angle) of a rotation matrix."""
    cos = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < 1e-10:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # near π: extract axis from the symmetric part
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        # fix signs using off-diagonals
        i = int(np.argmax(axis))
        if axis[i] > 0:
            for j in range(3):
                if j != i:
                    axis[j] = m[i, j] / axis[i]
        axis = axis / np.linalg.norm(axis)
        return axis * theta
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return w * (theta / (2.0 * np.sin(theta)))


def _se3_exp(w: np.ndarray, rho: np.ndarray) -> "RigidTransform":
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return RigidTransform(np.eye(3), rho, validate=False)
    k = _skew(w)
    k2 = k @ k
    r = np.eye(3) + np.sin(theta) / theta * k + (1.0 - np.cos(theta)) / theta**2 * k2
    v = np.eye(3) + (1.0 - np.cos(theta)) / theta**2 * k + (theta - np.sin(theta)) / theta**3 * k2
    return RigidTransform(r, v @ rho, validate=False)


def _se3_log(t: "RigidTransform") -> tuple[np.ndarray, np.ndarray]:
    w = rotation_log(t.rotation)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return w, t.translation.copy()
    k = _skew(w)
    k2 = k @ k
    v = np.eye(3) + (1.0 - np.cos(theta)) / theta**2 * k + (theta - np.sin(theta)) / theta**3 * k2
    return w, np.linalg.solve(v, t.translation)


def interpolate_pose(start: "RigidTransform", end: "RigidTransform", fraction: float) -> "RigidTransform":
    """Constant-screw interpolation from start (s=0) to end (s=1)."""
    w, rho = _se3_log(start.inverse().compose(end))
    return start.compose(_se3_exp(w * fraction, rho * fraction))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (QR-based with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 2] = -q[:, 2]
    return q
