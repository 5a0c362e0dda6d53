"""Corotational linear FEM with implicit backward Euler integration.

Force model: per-tet warped-stiffness corotational elasticity, lumped masses,
gravity, and Rayleigh damping. Each substep solves the SPD system

    [(1 + dt*alpha) M + (dt*beta + dt^2) K] v = M v_n + dt (f_el + f_ext)

by preconditioned conjugate gradients, with fixed and grasp-attached nodes as
prescribed-velocity boundary conditions. Grasp frames travel along a constant
screw toward their targets across the substeps of one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import GraspMissError, InvalidInputError, SimulationDivergedError
from ..geometry import PointCloud, RigidTransform, interpolate_pose
from .material import Material
from .mesh import TetMesh

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


@dataclass
class Attachment:
    """Nodes rigidly bound to a grasp frame, with rest offsets in that frame."""

    frame_id: int
    node_indices: np.ndarray
    offsets: np.ndarray  # (n, 3) in grasp-frame coordinates


@dataclass
class SimState:
    """Time-varying simulation state for one mesh."""

    positions: np.ndarray
    velocities: np.ndarray
    attachments: list[Attachment] = field(default_factory=list)
    grasp_frames: dict[int, RigidTransform] = field(default_factory=dict)

    @classmethod
    def rest(cls, mesh: TetMesh) -> "SimState":
        return cls(mesh.nodes.copy(), np.zeros_like(mesh.nodes))

    def copy(self) -> "SimState":
        return SimState(
            self.positions.copy(),
            self.velocities.copy(),
            [Attachment(a.frame_id, a.node_indices.copy(), a.offsets.copy()) for a in self.attachments],
            {k: RigidTransform(v.rotation.copy(), v.translation.copy(), validate=False) for k, v in self.grasp_frames.items()},
        )


class FemModel:
    """Per-mesh precomputation: element stiffness, masses, assembly indices."""

    def __init__(self, mesh: TetMesh, material: Material):
        self.mesh = mesh
        self.material = material
        tets = mesh.tets
        x = mesh.nodes[tets]  # (E, 4, 3)
        dm = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns are edges
        self.bm = np.linalg.inv(dm)
        self.volumes = np.linalg.det(dm) / 6.0
        self.rest = x

        # shape gradients: rows of Bm for nodes 1..3, negative sum for node 0
        grads = np.empty((len(tets), 4, 3))
        grads[:, 1:, :] = self.bm
        grads[:, 0, :] = -self.bm.sum(axis=1)

        mu, lam = material.lame
        c = np.zeros((6, 6))
        c[:3, :3] = lam
        c[np.arange(3), np.arange(3)] += 2.0 * mu
        c[np.arange(3, 6), np.arange(3, 6)] = mu

        b = np.zeros((len(tets), 6, 12))
        gx, gy, gz = grads[..., 0], grads[..., 1], grads[..., 2]
        for a in range(4):
            col = 3 * a
            b[:, 0, col + 0] = gx[:, a]
            b[:, 1, col + 1] = gy[:, a]
            b[:, 2, col + 2] = gz[:, a]
            b[:, 3, col + 0] = gy[:, a]
            b[:, 3, col + 1] = gx[:, a]
            b[:, 4, col + 1] = gz[:, a]
            b[:, 4, col + 2] = gy[:, a]
            b[:, 5, col + 0] = gz[:, a]
            b[:, 5, col + 2] = gx[:, a]
        self.ke = np.einsum("eia,ij,ejb->eab", b, c, b) * self.volumes[:, None, None]
        self.ke4 = self.ke.reshape(len(tets), 4, 3, 4, 3)

        self.mass = np.zeros(mesh.n_nodes)
        np.add.at(self.mass, tets.ravel(), np.repeat(material.density * self.volumes / 4.0, 4))

        dof = (3 * tets[:, :, None] + np.arange(3)[None, None, :]).reshape(len(tets), 12)
        self.rows = np.repeat(dof, 12, axis=1).ravel()
        self.cols = np.tile(dof, (1, 12)).ravel()
        self.n_dof = 3 * mesh.n_nodes

    def rotations(self, positions: np.ndarray) -> np.ndarray:
        """Per-element polar rotation of the deformation gradient."""
        xe = positions[self.mesh.tets]
        ds = np.transpose(xe[:, 1:] - xe[:, :1], (0, 2, 1))
        f = ds @ self.bm
        u, _, vt = np.linalg.svd(f)
        r = u @ vt
        neg = np.linalg.det(r) < 0.0
        if np.any(neg):
            u = u.copy()
            u[neg, :, -1] *= -1.0
            r = u @ vt
        return r

    def elastic_forces_and_stiffness(self, positions: np.ndarray):
        """Corotational nodal forces (N,3) and assembled warped stiffness (CSR)."""
        r = self.rotations(positions)
        xe = positions[self.mesh.tets]
        # d = Rᵀ x - X per element node
        d = np.einsum("eji,eaj->eai", r, xe) - self.rest
        g = np.einsum("eapbq,ebq->eap", self.ke4, d)
        fe = -np.einsum("eip,eap->eai", r, g)
        forces = np.zeros((self.mesh.n_nodes, 3))
        np.add.at(forces, self.mesh.tets.ravel(), fe.reshape(-1, 3))

        kw = np.einsum("eip,eapbq,ejq->eaibj", r, self.ke4, r).reshape(-1, 12, 12)
        k = sp.coo_matrix(
            (kw.ravel(), (self.rows, self.cols)), shape=(self.n_dof, self.n_dof)
        ).tocsr()
        return forces, k

    def elastic_energy(self, positions: np.ndarray) -> float:
        r = self.rotations(positions)
        xe = positions[self.mesh.tets]
        d = np.einsum("eji,eaj->eai", r, xe) - self.rest
        g = np.einsum("eapbq,ebq->eap", self.ke4, d)
        return float(0.5 * np.sum(d * g))


def attach(
    state: SimState,
    mesh: TetMesh,
    grasp_frame: RigidTransform,
    grasp_point,
    radius: float,
) -> int:
    """Bind all non-fixed nodes within ``radius`` of ``grasp_point`` to the frame.

    Returns the attachment id. Raises GraspMissError when no node qualifies.
    """
    point = np.asarray(grasp_point, dtype=np.float64)
    dist = np.linalg.norm(state.positions - point, axis=1)
    candidates = np.nonzero(dist <= radius)[0]
    candidates = np.setdiff1d(candidates, mesh.fixed, assume_unique=False)
    taken = np.concatenate([a.node_indices for a in state.attachments]) if state.attachments else np.array([], dtype=np.intp)
    candidates = np.setdiff1d(candidates, taken)
    if len(candidates) == 0:
        raise GraspMissError(f"no free node within {radius} m of {point.tolist()}")
    inv = grasp_frame.inverse()
    offsets = inv.apply(state.positions[candidates])
    frame_id = len(state.attachments)
    state.attachments.append(Attachment(frame_id, candidates, offsets))
    state.grasp_frames[frame_id] = grasp_frame
    return frame_id


def step(
    state: SimState,
    mesh: TetMesh,
    material: Material,
    grasp_frame_targets: dict[int, RigidTransform] | None = None,
    dt: float = 0.005,
    substeps: int = 1,
    gravity=DEFAULT_GRAVITY,
    external_forces: np.ndarray | None = None,
    model: FemModel | None = None,
    cg_rtol: float = 1e-8,
) -> SimState:
    """Advance ``substeps`` backward-Euler substeps of length ``dt`` each.

    Grasp frames follow a constant screw from their current pose to their
    target pose, arriving exactly at the final substep. Raises
    SimulationDivergedError when the linear solver fails or state goes
    non-finite.
    """
    if dt <= 0.0 or substeps < 1:
        raise InvalidInputError("dt must be > 0 and substeps >= 1")
    if model is None:
        model = FemModel(mesh, material)
    targets = grasp_frame_targets or {}
    for fid in targets:
        if fid not in state.grasp_frames:
            raise InvalidInputError(f"unknown grasp frame id {fid}")

    out = state.copy()
    starts = {fid: out.grasp_frames[fid] for fid in targets}
    g = np.asarray(gravity, dtype=np.float64)
    f_ext = model.mass[:, None] * g[None, :]
    if external_forces is not None:
        f_ext = f_ext + np.asarray(external_forces, dtype=np.float64)
    f_ext[mesh.fixed] = 0.0

    alpha, beta = material.rayleigh_mass, material.rayleigh_stiffness
    mass_dof = np.repeat(model.mass, 3)

    constrained = np.zeros(mesh.n_nodes, dtype=bool)
    constrained[mesh.fixed] = True
    for a in out.attachments:
        constrained[a.node_indices] = True
    con_dof = np.repeat(constrained, 3)
    free_dof = ~con_dof

    for k in range(substeps):
        frac = (k + 1) / substeps
        pose_now = {}
        for fid, target in targets.items():
            pose_now[fid] = interpolate_pose(starts[fid], target, frac)
        x, v = out.positions, out.velocities

        forces, kmat = model.elastic_forces_and_stiffness(x)
        a_mat = (dt * beta + dt * dt) * kmat
        a_mat = a_mat + sp.diags((1.0 + dt * alpha) * mass_dof)
        b = (mass_dof * v.reshape(-1)) + dt * (forces + f_ext).reshape(-1)

        # prescribed velocities for fixed + attached nodes
        v_presc = np.zeros(model.n_dof)
        for a in out.attachments:
            pose = pose_now.get(a.frame_id, out.grasp_frames[a.frame_id])
            target_pos = pose.apply(a.offsets)
            v_presc.reshape(-1, 3)[a.node_indices] = (target_pos - x[a.node_indices]) / dt

        a_ff = a_mat[free_dof][:, free_dof]
        rhs = b[free_dof] - a_mat[free_dof][:, con_dof] @ v_presc[con_dof]
        diag = a_ff.diagonal()
        precond = spla.LinearOperator(a_ff.shape, matvec=lambda r, d=diag: r / d)
        v_free, info = spla.cg(
            a_ff,
            rhs,
            x0=v.reshape(-1)[free_dof],
            rtol=cg_rtol,
            atol=0.0,
            maxiter=max(200, 10 * a_ff.shape[0]),
            M=precond,
        )
        if info != 0:
            raise SimulationDivergedError(f"CG failed to converge (info={info})")

        v_new = v_presc
        v_new[free_dof] = v_free
        v_new = v_new.reshape(-1, 3)
        x_new = x + dt * v_new
        # pin constrained nodes exactly to their targets
        x_new[mesh.fixed] = mesh.nodes[mesh.fixed]
        for a in out.attachments:
            pose = pose_now.get(a.frame_id, out.grasp_frames[a.frame_id])
            x_new[a.node_indices] = pose.apply(a.offsets)

        if not np.all(np.isfinite(x_new)) or np.abs(v_new).max(initial=0.0) > 1e4:
            raise SimulationDivergedError("non-finite or exploding state")
        out.positions, out.velocities = x_new, v_new
        for fid, pose in pose_now.items():
            out.grasp_frames[fid] = pose
    return out


def full_point_cloud(state: SimState, mesh: TetMesh) -> PointCloud:
    """Surface-node positions in fixed node-index order (simulator correspondence)."""
    return PointCloud(state.positions[mesh.surface_nodes])


class Simulator:
    """Owning handle for one (mesh, material, state) triple plus solver settings."""

    def __init__(
        self,
        mesh: TetMesh,
        material: Material,
        dt: float = 0.005,
        gravity=DEFAULT_GRAVITY,
        grasp_radius: float | None = None,
    ):
        self.mesh = mesh
        self.material = material
        self.dt = dt
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.grasp_radius = grasp_radius if grasp_radius is not None else 1.5 * mesh.resolution
        self.model = FemModel(mesh, material)
        self.state = SimState.rest(mesh)
        self.frames_elapsed = 0

    def copy(self) -> "Simulator":
        dup = object.__new__(Simulator)
        dup.mesh, dup.material, dup.dt = self.mesh, self.material, self.dt
        dup.gravity, dup.grasp_radius, dup.model = self.gravity, self.grasp_radius, self.model
        dup.state = self.state.copy()
        dup.frames_elapsed = self.frames_elapsed
        return dup

    def reset(self) -> None:
        self.state = SimState.rest(self.mesh)
        self.frames_elapsed = 0

    def grasp(self, world_point, radius: float | None = None) -> int:
        """Attach nodes around ``world_point`` to a fresh identity-rotation frame."""
        frame = RigidTransform(np.eye(3), np.asarray(world_point, dtype=np.float64))
        return attach(self.state, self.mesh, frame, world_point, radius or self.grasp_radius)

    def grasp_poses(self) -> dict[int, RigidTransform]:
        return dict(self.state.grasp_frames)

    def run(self, frames: int, targets: dict[int, RigidTransform] | None = None) -> None:
        """Advance ``frames`` integrator frames; grasp frames screw to targets."""
        self.state = step(
            self.state,
            self.mesh,
            self.material,
            targets,
            dt=self.dt,
            substeps=frames,
            gravity=self.gravity,
            model=self.model,
        )
        self.frames_elapsed += frames

    def settle(self, frames: int) -> None:
        self.run(frames, {fid: pose for fid, pose in self.state.grasp_frames.items()})

    def apply_action(self, actions: dict[int, RigidTransform], frames: int) -> None:
        """Move each grasp frame by its relative action over ``frames`` frames."""
        targets = {fid: self.state.grasp_frames[fid].compose(a) for fid, a in actions.items()}
        self.run(frames, targets)

    def full_cloud(self) -> PointCloud:
        return full_point_cloud(self.state, self.mesh)

    def attachment_points(self) -> dict[int, np.ndarray]:
        """Current centroid position of each attachment's node set."""
        return {
            a.frame_id: self.state.positions[a.node_indices].mean(axis=0)
            for a in self.state.attachments
        }
