"""Tetrahedral meshes: construction helpers, surface extraction, text I/O."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, MeshingError

FIXED_FACE_CHOICES = ("none", "x_min", "x_max", "y_min", "y_max", "z_min", "z_max")


def tet_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes of each tetrahedron."""
    p = nodes[tets]
    d = p[:, 1:] - p[:, :1]
    return np.linalg.det(d) / 6.0


def orient_tets(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Reorder tets so all signed volumes are positive (swap last two indices)."""
    tets = np.array(tets, dtype=np.intp)
    neg = tet_volumes(nodes, tets) < 0.0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    return tets


def boundary_triangles(tets: np.ndarray) -> np.ndarray:
    """Outward-oriented boundary triangles of a positively oriented tet mesh."""
    # outward-facing faces of tet (a, b, c, d): (b,c,d), (a,d,c), (a,b,d), (a,c,b)
    faces = np.concatenate(
        [
            tets[:, [1, 2, 3]],
            tets[:, [0, 3, 2]],
            tets[:, [0, 1, 3]],
            tets[:, [0, 2, 1]],
        ],
        axis=0,
    )
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return faces[counts[inverse] == 1]


class TetMesh:
    """Rest geometry: nodes (m), positively oriented tets, oriented surface, fixed set."""

    def __init__(self, nodes, tets, surface=None, fixed=(), resolution=None):
        self.nodes = np.asarray(nodes, dtype=np.float64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise InvalidInputError("nodes must be (N, 3)")
        self.tets = orient_tets(self.nodes, np.asarray(tets, dtype=np.intp))
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise InvalidInputError("tets must be (T, 4)")
        if self.tets.max(initial=-1) >= len(self.nodes) or self.tets.min(initial=0) < 0:
            raise InvalidInputError("tet indices out of range")
        vols = tet_volumes(self.nodes, self.tets)
        scale = float(np.abs(self.nodes).max()) or 1.0
        if np.any(vols <= 1e-9 * scale**3 * 1e-3):
            raise MeshingError(
                f"{int(np.sum(vols <= 0))} degenerate/inverted tets (min volume {vols.min():.3e})"
            )
        self.surface = (
            np.asarray(surface, dtype=np.intp) if surface is not None else boundary_triangles(self.tets)
        )
        self.fixed = np.array(sorted(set(int(i) for i in fixed)), dtype=np.intp)
        if len(self.fixed) and (self.fixed.max() >= len(self.nodes) or self.fixed.min() < 0):
            raise InvalidInputError("fixed node indices out of range")
        self.resolution = resolution if resolution is not None else self._edge_estimate()
        # surface node index order is fixed for the lifetime of the mesh
        self.surface_nodes = np.unique(self.surface)

    def _edge_estimate(self) -> float:
        e = self.nodes[self.tets[:, 1]] - self.nodes[self.tets[:, 0]]
        return float(np.median(np.linalg.norm(e, axis=1)))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def total_volume(self) -> float:
        return float(tet_volumes(self.nodes, self.tets).sum())

    def with_fixed_face(self, selector: str, tol_fraction: float = 0.25) -> "TetMesh":
        """Mesh with nodes on one bounding face marked fixed."""
        if selector not in FIXED_FACE_CHOICES:
            raise InvalidInputError(f"unknown fixed-face selector {selector!r}")
        if selector == "none":
            fixed = ()
        else:
            axis = "xyz".index(selector[0])
            tol = tol_fraction * self.resolution
            if selector.endswith("min"):
                fixed = np.nonzero(self.nodes[:, axis] <= self.nodes[:, axis].min() + tol)[0]
            else:
                fixed = np.nonzero(self.nodes[:, axis] >= self.nodes[:, axis].max() - tol)[0]
        return TetMesh(self.nodes, self.tets, self.surface, fixed, self.resolution)


def write_tetmesh_text(mesh: TetMesh, path) -> None:
    """Plain-text tet mesh: nodes / tets / tris / fixed sections."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for p in mesh.nodes:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        fh.write(f"tets {len(mesh.tets)}\n")
        for t in mesh.tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"tris {len(mesh.surface)}\n")
        for t in mesh.surface:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")
        fh.write("fixed " + " ".join(str(i) for i in mesh.fixed) + "\n")


def read_tetmesh_text(path) -> TetMesh:
    """Parse the text format produced by write_tetmesh_text (tris/fixed optional)."""
    tokens: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos : pos + n]
        if len(out) != n:
            raise InvalidInputError("truncated tet mesh file")
        pos += n
        return out

    nodes = tets = tris = None
    fixed: list[int] = []
    while pos < len(tokens):
        section = tokens[pos]
        pos += 1
        if section == "nodes":
            n = int(take(1)[0])
            nodes = np.array(take(3 * n), dtype=np.float64).reshape(n, 3)
        elif section == "tets":
            n = int(take(1)[0])
            tets = np.array(take(4 * n), dtype=np.intp).reshape(n, 4)
        elif section == "tris":
            n = int(take(1)[0])
            tris = np.array(take(3 * n), dtype=np.intp).reshape(n, 3)
        elif section == "fixed":
            while pos < len(tokens) and tokens[pos].lstrip("-").isdigit():
                fixed.append(int(tokens[pos]))
                pos += 1
        else:
            raise InvalidInputError(f"unknown section {section!r} in tet mesh file")
    if nodes is None or tets is None:
        raise InvalidInputError("tet mesh file must contain nodes and tets sections")
    return TetMesh(nodes, tets, tris, fixed)
