"""Primitive object generation: box, cylinder, hemi-ellipsoid, imported meshes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError, MeshingError
from .material import Material
from .mesh import TetMesh, read_tetmesh_text

PRIMITIVE_KINDS = ("box", "cylinder", "hemi_ellipsoid", "imported")

# Alternating 5-tet cube split, corners addressed by (dx, dy, dz) offsets.
# Adjacent cells use mirrored variants so shared-face diagonals match and the
# mesh mirrors onto itself for even cell counts (needed for symmetry checks).
_CUBE_TETS_EVEN = (
    ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((1, 1, 0), (1, 0, 0), (0, 1, 0), (1, 1, 1)),
    ((1, 0, 1), (1, 0, 0), (0, 0, 1), (1, 1, 1)),
    ((0, 1, 1), (0, 1, 0), (0, 0, 1), (1, 1, 1)),
    ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)),
)
_CUBE_TETS_ODD = (
    ((1, 0, 0), (0, 0, 0), (1, 1, 0), (1, 0, 1)),
    ((0, 1, 0), (0, 0, 0), (1, 1, 0), (0, 1, 1)),
    ((0, 0, 1), (0, 0, 0), (1, 0, 1), (0, 1, 1)),
    ((1, 1, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1)),
    ((0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)),
)


@dataclass(frozen=True)
class PrimitiveSpec:
    """Shape kind plus its dimension parameters and target mesh edge length."""

    kind: str
    dims: dict = field(default_factory=dict)
    resolution: float = 0.02

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise InvalidInputError(f"unknown primitive kind {self.kind!r}")
        if self.resolution <= 0.0:
            raise InvalidInputError("resolution must be > 0")
        for name, value in self.dims.items():
            if name != "path" and float(value) <= 0.0:
                raise InvalidInputError(f"dimension {name!r} must be > 0")

    def characteristic_length(self) -> float:
        if self.kind == "box":
            return max(self.dims["width"], self.dims["height"], self.dims["thickness"])
        if self.kind == "cylinder":
            return max(2.0 * self.dims["radius"], self.dims["height"])
        if self.kind == "hemi_ellipsoid":
            return 2.0 * self.dims["radius"]
        return float(self.dims.get("length", 0.1))


def _grid(xs, ys, zs, warp=None):
    """Nodes + Freudenthal tets of a structured hex grid; warp maps node coords."""
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    if warp is not None:
        nodes = warp(nodes)

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                pattern = _CUBE_TETS_EVEN if (i + j + k) % 2 == 0 else _CUBE_TETS_ODD
                for corners in pattern:
                    tets.append([nid(i + dx, j + dy, k + dz) for dx, dy, dz in corners])
    return nodes, np.array(tets, dtype=np.intp)


def _axis_lines(extent: float, resolution: float, center: bool = True):
    n = int(round(extent / resolution))
    if n == 0:
        # thin dimensions still get one cell unless far below the target edge
        if extent >= 0.25 * resolution:
            n = 1
        else:
            raise MeshingError(f"resolution {resolution} too coarse for extent {extent}")
    lo = -extent / 2.0 if center else 0.0
    return np.linspace(lo, lo + extent, n + 1)


def _square_to_disk(xy: np.ndarray) -> np.ndarray:
    """Map the unit square [-1,1]^2 onto the unit disk, boundary to boundary."""
    linf = np.abs(xy).max(axis=1)
    l2 = np.linalg.norm(xy, axis=1)
    scale = np.divide(linf, l2, out=np.ones_like(l2), where=l2 > 0)
    return xy * scale[:, None]


def _cube_to_ball(xyz: np.ndarray) -> np.ndarray:
    linf = np.abs(xyz).max(axis=1)
    l2 = np.linalg.norm(xyz, axis=1)
    scale = np.divide(linf, l2, out=np.ones_like(l2), where=l2 > 0)
    return xyz * scale[:, None]


def build_mesh(spec: PrimitiveSpec) -> TetMesh:
    """Tetrahedralize a primitive at its target resolution."""
    res = spec.resolution
    if spec.kind == "box":
        w, h, t = spec.dims["width"], spec.dims["height"], spec.dims["thickness"]
        nodes, tets = _grid(_axis_lines(w, res), _axis_lines(h, res), _axis_lines(t, res))
    elif spec.kind == "cylinder":
        r, h = spec.dims["radius"], spec.dims["height"]
        n_sec = int(round(2.0 * r / res))
        if n_sec < 2:
            raise MeshingError(f"resolution {res} too coarse for cylinder radius {r}")
        sec = np.linspace(-1.0, 1.0, n_sec + 1)

        def warp(nodes):
            out = nodes.copy()
            out[:, [0, 2]] = _square_to_disk(nodes[:, [0, 2]]) * r
            return out

        # cross-section in the xz-plane, axis along y
        nodes, tets = _grid(sec, _axis_lines(h, res), sec, warp=warp)
    elif spec.kind == "hemi_ellipsoid":
        r = spec.dims["radius"]
        aspect = spec.dims.get("aspect", 1.0)
        rx, ry, rz = r / aspect, r, r
        n_sec = int(round(2.0 * r / res))
        n_up = int(round(r / res))
        if n_sec < 2 or n_up < 1:
            raise MeshingError(f"resolution {res} too coarse for hemi-ellipsoid radius {r}")
        sec = np.linspace(-1.0, 1.0, n_sec + 1)
        up = np.linspace(0.0, 1.0, n_up + 1)

        def warp(nodes):
            out = _cube_to_ball(nodes)
            out[:, 0] *= rx
            out[:, 1] *= ry
            out[:, 2] *= rz
            return out

        nodes, tets = _grid(sec, sec, up, warp=warp)
    elif spec.kind == "imported":
        return read_tetmesh_text(spec.dims["path"])
    else:  # pragma: no cover - guarded by PrimitiveSpec
        raise InvalidInputError(spec.kind)
    try:
        return TetMesh(nodes, tets, resolution=res)
    except MeshingError as exc:
        raise MeshingError(f"{spec.kind} at resolution {res}: {exc}") from exc


def sample_primitive_population(
    kind: str,
    count: int,
    dimension_ranges: dict,
    stiffness_gaussian: tuple[float, float],
    rng_seed: int,
    resolution: float = 0.02,
    material_defaults: dict | None = None,
) -> list[tuple[PrimitiveSpec, Material]]:
    """Random object population: uniform dimensions, Gaussian Young's modulus.

    Deterministic given rng_seed. The modulus is rejection-resampled to stay
    positive. Per-kind ranges: box uses width/thickness/aspect (height =
    width * aspect), cylinder radius/aspect (height = radius * aspect),
    hemi_ellipsoid radius/aspect.
    """
    mean, std = stiffness_gaussian
    if std <= 0.0:
        raise InvalidInputError("stiffness std must be > 0")
    for name, (lo, hi) in dimension_ranges.items():
        if not lo <= hi:
            raise InvalidInputError(f"empty range for {name!r}")
    rng = np.random.default_rng(rng_seed)
    defaults = material_defaults or {}
    population = []
    for _ in range(count):
        draw = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in dimension_ranges.items()}
        if kind == "box":
            dims = {
                "width": draw["width"],
                "height": draw["width"] * draw["aspect"],
                "thickness": draw["thickness"],
            }
        elif kind == "cylinder":
            dims = {"radius": draw["radius"], "height": draw["radius"] * draw["aspect"]}
        elif kind == "hemi_ellipsoid":
            dims = {"radius": draw["radius"], "aspect": draw["aspect"]}
        else:
            raise InvalidInputError(f"cannot sample population for kind {kind!r}")
        youngs = float(rng.normal(mean, std))
        while youngs <= 0.0:
            youngs = float(rng.normal(mean, std))
        population.append(
            (
                PrimitiveSpec(kind, dims, resolution),
                Material(youngs_modulus=youngs, **defaults),
            )
        )
    return population
