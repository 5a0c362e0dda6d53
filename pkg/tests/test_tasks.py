import numpy as np
import pytest
import torch

from shapeservo.errors import InvalidCurveError
from shapeservo.geometry import (
    Plane,
    PointCloud,
    RigidTransform,
    axis_angle_matrix,
    discrete_frechet,
    rot6d_encode,
)
from shapeservo.nn import PolicyConfig
from shapeservo.nn.manip_point import FixedPointsSelector
from shapeservo.sensing import make_camera
from shapeservo.servo import ServoConfig
from shapeservo.softbody import Material, PrimitiveSpec, Simulator, TetMesh, build_primitive
from shapeservo.tasks import (
    CurveGoal,
    PlaneGoal,
    WrapGoal,
    load_goal_file,
    retraction_goal,
    run_retraction,
    save_goal_file,
    score_tube_connect,
    score_wrap,
    sweep_tube_cloud,
    tube_backbone,
    tube_connect_goals,
    tube_end_ring,
    wrap_goal,
)

MAT = Material(youngs_modulus=5e3)
IDENT6 = rot6d_encode(np.eye(3))


class ScriptedPolicy:
    def __init__(self, outputs, config):
        self.outputs = [np.asarray(o, dtype=np.float32) for o in outputs]
        self.config = config
        self.calls = 0

    def __call__(self, cur_feats, cur_pyr, goal_feats, goal_pyr):
        out = self.outputs[min(self.calls, len(self.outputs) - 1)]
        self.calls += 1
        return torch.as_tensor(out)[None]


# ---------------------------------------------------------------- goal files


def test_goal_file_roundtrip(tmp_path):
    plane = PlaneGoal(Plane([0, 0, 1.0], 0.01), 0.004, 6)
    curve = CurveGoal(np.array([[0.0, 0, 0], [0.05, 0.0, 0.02], [0.1, 0, 0]]), 0.02)
    wrap = WrapGoal([0.0, 0.0, 0.05], [0, 1.0, 0], 0.08, 0.01, 0.12)
    for i, goal in enumerate((plane, curve, wrap)):
        path = tmp_path / f"goal{i}.json"
        save_goal_file(path, goal)
        back = load_goal_file(path)
        assert type(back) is type(goal)
    back_plane = load_goal_file(tmp_path / "goal0.json")
    assert np.allclose(back_plane.plane.normal, plane.plane.normal)
    assert back_plane.max_shifts == 6


# ---------------------------------------------------------------- retraction


def flat_plate_cloud(n=400, seed=0, z=0.0):
    rng = np.random.default_rng(seed)
    pts = np.zeros((n, 3))
    pts[:, 0] = rng.uniform(0.0, 0.1, n)
    pts[:, 1] = rng.uniform(-0.04, 0.04, n)
    pts[:, 2] = z
    return PointCloud(pts)


def test_retraction_goal_already_good_side():
    cloud = flat_plate_cloud(z=0.05)
    goal = PlaneGoal(Plane([0, 0, 1.0], 0.01))
    out = retraction_goal(cloud, goal)
    assert np.array_equal(out.points, cloud.points)


def test_retraction_goal_rotates_plate_about_hinge():
    # plate in z=0 plane along +x from the hinge at x=0; target plane at 45°
    # through the plate's fixed edge (the y-axis), good side above
    cloud = flat_plate_cloud()
    normal = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0)
    goal = PlaneGoal(Plane(normal, 0.0))
    out = retraction_goal(cloud, goal, rng_seed=3)
    assert len(out) == len(cloud)
    # expected: plate rotated 45° about the y-axis hinge (toward +z over x<...)
    rot = axis_angle_matrix([0.0, 1.0, 0.0], -np.pi / 4.0)
    expected = cloud.points @ rot.T
    err = np.linalg.norm(out.points - expected, axis=1).max()
    assert err < 1e-6


def test_retraction_goal_point_count_preserved():
    cloud = flat_plate_cloud(seed=5)
    goal = PlaneGoal(Plane([0.0, 0, 1.0], 0.02))
    out = retraction_goal(cloud, goal)
    assert len(out) == len(cloud)


def make_tissue_sim():
    spec = PrimitiveSpec("box", {"width": 0.1, "height": 0.08, "thickness": 0.01}, 0.02)
    mesh, _ = build_primitive(spec, MAT, "x_min")
    return Simulator(mesh, MAT, gravity=(0, 0, 0))


def test_run_retraction_trivial_success():
    sim = make_tissue_sim()
    goal = PlaneGoal(Plane([0, 0, -1.0], -0.05))  # good side: z < 0.05 (all of it)
    policy = ScriptedPolicy([np.concatenate([[0, 0, 0], IDENT6])], PolicyConfig(arms=1, n_points=64))
    config = ServoConfig(max_steps=3, n_points=64, settle_frames=0, action_frames=5)
    result = run_retraction(sim, policy, FixedPointsSelector([[0.05, 0, 0]]), goal, config, make_camera(distance=0.4, width=64, height=64))
    assert result.success and result.total_actions == 0


def test_run_retraction_impossible_reports_failure():
    sim = make_tissue_sim()
    # good side is far below the fixed plate; fixed nodes can never cross
    goal = PlaneGoal(Plane([0, 0, -1.0], 0.5), shift_increment=0.005, max_shifts=2)
    policy = ScriptedPolicy([np.concatenate([[0, 0, 0], IDENT6])], PolicyConfig(arms=1, n_points=64))
    config = ServoConfig(max_steps=1, n_points=64, settle_frames=0, action_frames=5)
    result = run_retraction(
        sim, policy, FixedPointsSelector([[0.05, 0, 0]]), goal, config,
        make_camera(distance=0.4, width=64, height=64),
    )
    assert not result.success
    assert result.reason in ("entirely on bad side", "shift budget exhausted")


# ---------------------------------------------------------------- tube sweep


def test_tube_goals_straight_line():
    curve = CurveGoal(np.array([[0.0, -0.05, 0.0], [0.0, 0.05, 0.0]]), 0.02)
    left, right = tube_connect_goals(curve, n_axial=8, n_circ=12)
    for half, y_range in ((left, (-0.05, 0.0)), (right, (0.0, 0.05))):
        radial = np.linalg.norm(half.points[:, [0, 2]], axis=1)
        assert np.allclose(radial, 0.01, atol=1e-9)
        assert half.points[:, 1].min() >= y_range[0] - 1e-9
        assert half.points[:, 1].max() <= y_range[1] + 1e-9


def test_tube_sweep_points_at_radius():
    pts = np.array([[0.0, 0.0, 0.0], [0.02, 0.03, 0.0], [0.05, 0.05, 0.01]])
    cloud = sweep_tube_cloud(pts, 0.008, 12, 10)
    # distance from each sample to the nearest centerline segment ~ radius
    center = pts
    for p in cloud.points[::7]:
        best = np.inf
        for a, b in zip(center[:-1], center[1:]):
            e = b - a
            t = np.clip(((p - a) @ e) / (e @ e), 0, 1)
            best = min(best, np.linalg.norm(p - (a + t * e)))
        assert best == pytest.approx(0.008, abs=2e-3)


def test_tube_goals_arc_centerline_frechet():
    theta = np.linspace(0, np.pi / 2, 20)
    pts = np.stack([0.1 * np.cos(theta), 0.1 * np.sin(theta), np.zeros_like(theta)], axis=1)
    curve = CurveGoal(pts, 0.02)
    left, right = tube_connect_goals(curve, n_axial=16, n_circ=16)
    # reconstruct each half's centerline by averaging rings
    for half, lo, hi in ((left, 0, 65), (right, 64, 129)):
        ring_centers = half.points.reshape(16, 16, 3).mean(axis=1)
        from shapeservo.tasks.tube_connect import _arclength_resample

        dense = _arclength_resample(pts, 129)
        ref = _arclength_resample(dense[lo:hi], 16)
        assert discrete_frechet(ring_centers, ref) < 0.01


def test_tube_curvature_validation():
    # hairpin tighter than the tube radius
    pts = np.array([[0.0, 0, 0], [0.004, 0.004, 0.0], [0.008, 0.0, 0.0]])
    with pytest.raises(InvalidCurveError):
        tube_connect_goals(CurveGoal(pts, 0.02))


def test_backbone_and_end_rings_on_cylinder():
    spec = PrimitiveSpec("cylinder", {"radius": 0.01, "height": 0.1}, 0.01)
    mesh, state = build_primitive(spec, MAT, "y_min")
    backbone = tube_backbone(mesh, state.positions, n_slices=10)
    assert backbone.shape[0] == 10
    assert np.abs(backbone[:, [0, 2]]).max() < 2e-3  # on the axis
    ring = tube_end_ring(mesh, state.positions, "max")
    assert np.allclose(ring[:, 1], 0.05, atol=1e-9)


def test_score_tube_connect_gap_translation():
    spec = PrimitiveSpec("cylinder", {"radius": 0.01, "height": 0.1}, 0.01)
    mesh, state = build_primitive(spec, MAT, "y_min")
    sim_a = Simulator(mesh, MAT)
    sim_b = Simulator(mesh, MAT)
    # identical tubes: rings coincide, gap 0
    curve = np.stack([np.zeros(10), np.linspace(-0.05, 0.05, 10), np.zeros(10)], axis=1)
    gap0, fr0 = score_tube_connect((sim_a, sim_b), ("max", "max"), (curve, curve))
    assert gap0 == pytest.approx(0.0, abs=1e-12)
    # translate one tube: gap grows by exactly the translation norm
    t = np.array([0.0, 0.01, 0.02])
    sim_b.state.positions = sim_b.state.positions + t
    gap1, _ = score_tube_connect((sim_a, sim_b), ("max", "max"), (curve, curve))
    assert gap1 == pytest.approx(np.linalg.norm(t), rel=1e-9)


# ---------------------------------------------------------------- wrapping


def shell_mesh(radius, length, arc_fraction, n_axial=12, n_circ=24, thickness=0.002):
    """Thin open cylindrical shell around the y-axis covering arc_fraction of 2π."""
    angles = np.linspace(0.0, 2.0 * np.pi * arc_fraction, n_circ + 1)
    ys = np.linspace(-length / 2, length / 2, n_axial + 1)
    nodes, tets = [], []

    def nid(i, j, k):
        return (i * (n_circ + 1) + j) * 2 + k

    for i, y in enumerate(ys):
        for j, t in enumerate(angles):
            for k, r in enumerate((radius, radius + thickness)):
                nodes.append([r * np.cos(t), y, r * np.sin(t)])
    from shapeservo.softbody.primitives import _CUBE_TETS_EVEN, _CUBE_TETS_ODD

    for i in range(n_axial):
        for j in range(n_circ):
            pattern = _CUBE_TETS_EVEN if (i + j) % 2 == 0 else _CUBE_TETS_ODD
            for corners in pattern:
                tets.append([nid(i + di, j + dj, dk) for di, dj, dk in corners])
    return TetMesh(np.asarray(nodes), np.asarray(tets))


def test_wrap_goal_radius_from_tissue_length():
    goal = WrapGoal([0, 0, 0], [0, 1, 0], 0.08, 0.01, 0.12)
    cloud = wrap_goal(goal)
    radial = np.linalg.norm(cloud.points[:, [0, 2]], axis=1)
    assert np.allclose(radial, 0.12 / (2 * np.pi), atol=1e-9)
    assert np.abs(cloud.points[:, 1]).max() <= 0.04 + 1e-9


def test_full_wrap_scores_100():
    goal = WrapGoal([0, 0, 0], [0, 1, 0], 0.08, 0.01, 2 * np.pi * 0.015)
    mesh = shell_mesh(0.015, 0.1, 1.0)
    assert score_wrap(mesh, mesh.nodes, goal, n_rays=2000) == pytest.approx(100.0)


def test_half_wrap_scores_50():
    goal = WrapGoal([0, 0, 0], [0, 1, 0], 0.08, 0.01, 2 * np.pi * 0.015)
    mesh = shell_mesh(0.015, 0.1, 0.5)
    cov = score_wrap(mesh, mesh.nodes, goal, n_rays=2000)
    assert cov == pytest.approx(50.0, abs=2.0)


def test_coverage_invariant_under_joint_rigid_transform():
    goal = WrapGoal([0, 0, 0], [0, 1, 0], 0.08, 0.01, 2 * np.pi * 0.015)
    # arc end chosen off the ray angular grid so no ray grazes the shell edge
    mesh = shell_mesh(0.015, 0.1, 0.637)
    base = score_wrap(mesh, mesh.nodes, goal, n_rays=1000)
    world = RigidTransform(axis_angle_matrix([0.3, 1, 0.2], 0.9), [0.2, -0.1, 0.3])
    # the default helper is world-z; the jointly transformed goal carries it along
    moved_goal = WrapGoal(
        world.apply(goal.center[None, :])[0],
        world.rotation @ goal.axis,
        goal.length,
        goal.radius,
        goal.tissue_length,
        ref_dir=world.rotation @ np.array([0.0, 0.0, 1.0]),
    )
    moved = score_wrap(mesh, world.apply(mesh.nodes), moved_goal, n_rays=1000)
    assert moved == pytest.approx(base, abs=1e-9)
