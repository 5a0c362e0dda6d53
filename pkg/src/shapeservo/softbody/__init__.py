"""Tetrahedral soft-body simulation: primitives, grasping, implicit FEM stepping."""

from .material import Material
from .mesh import TetMesh, boundary_triangles, read_tetmesh_text, tet_volumes, write_tetmesh_text
from .primitives import PrimitiveSpec, build_mesh, sample_primitive_population
from .simulator import (
    DEFAULT_GRAVITY,
    Attachment,
    FemModel,
    SimState,
    Simulator,
    attach,
    full_point_cloud,
    step,
)


def build_primitive(spec: PrimitiveSpec, material: Material, fixed_face: str = "none"):
    """Mesh a primitive, mark its fixed face, and return (mesh, rest state)."""
    mesh = build_mesh(spec).with_fixed_face(fixed_face)
    return mesh, SimState.rest(mesh)


__all__ = [
    "Attachment",
    "DEFAULT_GRAVITY",
    "FemModel",
    "Material",
    "PrimitiveSpec",
    "SimState",
    "Simulator",
    "TetMesh",
    "attach",
    "boundary_triangles",
    "build_mesh",
    "build_primitive",
    "full_point_cloud",
    "read_tetmesh_text",
    "sample_primitive_population",
    "step",
    "tet_volumes",
    "write_tetmesh_text",
]
