"""Pipeline stages behind the CLI subcommands.

Each stage is a plain function over the merged run config so tests and the
acceptance suite can drive them in-process.
"""

from __future__ import annotations

import csv
import json
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from ..datagen import (
    GenerationSettings,
    MPSample,
    TrainingSample,
    build_classifier_samples,
    build_mp_samples,
    build_policy_samples,
    generate_trajectories,
    load_trajectories,
    read_dataset,
    save_trajectories,
    write_dataset,
)
from ..errors import InvalidInputError
from ..geometry import Plane, PointCloud, axis_angle_matrix, object_frame
from ..nn import (
    ClassifierSelector,
    DensePredictorSelector,
    MPConfig,
    PolicyConfig,
    UniformRandomSelector,
    load_mp_model,
    load_policy,
    save_mp_model,
    save_policy,
    train_classifier,
    train_dense_predictor,
    train_policy,
)
from ..rrt import RrtConfig, plan, replay_plan
from ..sensing import make_camera, preprocess_observation, render_partial_cloud
from ..servo import ServoConfig, evaluate_suite, goal_from_record, oracle_selector_for, run_servo
from ..softbody import Material, PrimitiveSpec, Simulator, build_primitive, sample_primitive_population
from ..tasks import (
    CurveGoal,
    PlaneGoal,
    WrapGoal,
    run_retraction,
    run_tube_connect,
    run_wrap,
)
from .config import write_json


# ------------------------------------------------------------------ adapters


def settings_from(config: dict) -> GenerationSettings:
    d = config["datagen"]
    cam = config["camera"]
    return GenerationSettings(
        arms=d["arms"],
        trajectories_per_grasp=d["trajectories_per_grasp"],
        checkpoint_stride=d["checkpoint_stride"],
        checkpoints=d["checkpoints"],
        raw_points=d["raw_points"],
        fixed_face=config["category"]["fixed_face"],
        settle_frames=d["settle_frames"],
        translation_factor=d["translation_factor"],
        max_rotation=np.radians(d["max_rotation_deg"]),
        dt=d["dt"],
        gravity=tuple(d["gravity"]),
        camera_distance=cam["distance"],
        camera_azimuth=np.radians(cam["azimuth_deg"]),
        camera_elevation=np.radians(cam["elevation_deg"]),
        camera_resolution=cam["resolution"],
    )


def camera_from(config: dict):
    cam = config["camera"]
    return make_camera(
        distance=cam["distance"],
        azimuth=np.radians(cam["azimuth_deg"]),
        elevation=np.radians(cam["elevation_deg"]),
        width=cam["resolution"],
        height=cam["resolution"],
    )


def servo_config_from(config: dict) -> ServoConfig:
    s = config["servo"]
    return ServoConfig(
        epsilon_translation=s["epsilon_translation"],
        epsilon_rotation=np.radians(s["epsilon_rotation_deg"]),
        max_steps=s["max_steps"],
        action_frames=s["action_frames"],
        settle_frames=s["settle_frames"],
        n_points=config["sampling"]["n_points"],
        k_nearest=config["sampling"]["k_nearest"],
    )


def population_from(config: dict, count: int, seed: int):
    cat = config["category"]
    ranges = {name: tuple(r) for name, r in cat["dimension_ranges"].items()}
    return sample_primitive_population(
        cat["kind"], count, ranges, tuple(cat["stiffness_gaussian"]), seed, cat["resolution"]
    )


# ------------------------------------------------------------------ datasets


def _policy_sample_arrays(s: TrainingSample) -> dict:
    return {"current": s.current, "goal": s.goal, "target": s.target}


def _mp_sample_arrays(s: MPSample) -> dict:
    return {"current": s.current, "goal": s.goal, "label": np.asarray(s.label_index, dtype=np.float64)}


def _classifier_sample_arrays(s: MPSample) -> dict:
    return {
        "current": s.current,
        "goal": s.goal,
        "candidate": s.candidate,
        "label": np.array([s.label]),
    }


def load_policy_dataset(path) -> list[TrainingSample]:
    _, rows = read_dataset(path)
    return [
        TrainingSample(r["current"].astype(np.float64), r["goal"].astype(np.float64), r["target"].astype(np.float64))
        for r in rows
    ]


def load_mp_dataset(path) -> list[MPSample]:
    _, rows = read_dataset(path)
    return [
        MPSample(
            r["current"].astype(np.float64),
            r["goal"].astype(np.float64),
            label_index=r["label"].astype(np.int64),
        )
        for r in rows
    ]


def load_classifier_dataset(path) -> list[MPSample]:
    _, rows = read_dataset(path)
    return [
        MPSample(
            r["current"].astype(np.float64),
            r["goal"].astype(np.float64),
            candidate=r["candidate"].astype(np.float64),
            label=float(r["label"][0]),
        )
        for r in rows
    ]


def _gen_one_config(args):
    spec_mat, settings, seed, obj_id = args
    return generate_trajectories([spec_mat], settings, seed, object_id_offset=obj_id)


def gen_data(config: dict, workers: int = 1) -> dict:
    """Trajectories plus the three supervised datasets; returns output paths."""
    out = Path(config["output_dir"])
    traj_dir = out / "trajectories"
    data_dir = out / "datasets"
    traj_dir.mkdir(parents=True, exist_ok=True)
    data_dir.mkdir(parents=True, exist_ok=True)

    settings = settings_from(config)
    population = population_from(config, config["category"]["count"], config["seed"])
    if workers > 1:
        ctx = get_context("fork")
        jobs = [((spec, mat), settings, config["seed"], i) for i, (spec, mat) in enumerate(population)]
        with ctx.Pool(workers) as pool:
            batches = pool.map(_gen_one_config, jobs)
        records = [rec for batch in batches for rec in batch]
    else:
        records = generate_trajectories(population, settings, config["seed"])

    paths = []
    for obj_id in sorted({r.object_id for r in records}):
        path = traj_dir / f"config_{obj_id:04d}.dssv"
        save_trajectories(path, [r for r in records if r.object_id == obj_id])
        paths.append(str(path))

    n_points = config["sampling"]["n_points"]
    k_nearest = config["sampling"]["k_nearest"]
    policy = build_policy_samples(records, config["sampling"]["policy_count"], config["seed"], n_points, k_nearest)
    policy_path = data_dir / "policy.dssv"
    write_dataset(policy_path, [_policy_sample_arrays(s) for s in policy], {"kind": "policy", "seed": config["seed"], "arms": settings.arms, "n_points": n_points})

    mp = build_mp_samples(records, config["sampling"]["mp_count"], config["seed"], n_points)
    mp_path = data_dir / "dense.dssv"
    write_dataset(mp_path, [_mp_sample_arrays(s) for s in mp], {"kind": "dense", "seed": config["seed"], "arms": settings.arms, "n_points": n_points})

    outputs = {"trajectories": paths, "policy": str(policy_path), "dense": str(mp_path)}
    if config["sampling"]["classifier_count"] > 0:
        cls = build_classifier_samples(records, config["sampling"]["classifier_count"], config["seed"], n_points)
        cls_path = data_dir / "classifier.dssv"
        write_dataset(cls_path, [_classifier_sample_arrays(s) for s in cls], {"kind": "classifier", "seed": config["seed"], "arms": settings.arms, "n_points": n_points})
        outputs["classifier"] = str(cls_path)
    return outputs


def eval_goal_records(config: dict):
    """Held-out goal suite: fresh objects, random trajectories, actions discarded."""
    goal_config = dict(config, category=dict(config["category"], count=config["eval"]["objects"]))
    settings = settings_from(goal_config)
    settings.trajectories_per_grasp = config["eval"]["goals_per_object"]
    population = population_from(goal_config, config["eval"]["objects"], config["eval"]["goal_seed"])
    return generate_trajectories(population, settings, config["eval"]["goal_seed"])


# ------------------------------------------------------------------ training


def train_stage(config: dict, which: str, dataset_path, checkpoint_path, variant: dict | None = None) -> dict:
    """Train one model kind from a dataset file and write its checkpoint."""
    t = config["training"]
    arms = config["datagen"]["arms"]
    n_points = config["sampling"]["n_points"]
    variant = variant or {}
    if which == "policy":
        samples = load_policy_dataset(dataset_path)
        pcfg = PolicyConfig(
            arms=arms,
            n_points=n_points,
            with_masks=variant.get("with_masks", t["with_masks"]),
            translation_only=variant.get("translation_only", t["translation_only"]),
        )
        result = train_policy(samples, pcfg, t["epochs"], t["batch_size"], config["seed"], t["base_lr"])
        meta = {"epochs": t["epochs"], "seed": config["seed"], "final_loss": result.loss_curve[-1], "loss_curve": result.loss_curve}
        save_policy(checkpoint_path, result.model, meta)
        return meta
    mcfg = MPConfig(arms=arms, n_points=n_points)
    if which == "dense":
        samples = load_mp_dataset(dataset_path)
        model, curve = train_dense_predictor(samples, mcfg, t["epochs"], t["batch_size"], config["seed"], t["base_lr"])
    elif which == "classifier":
        samples = load_classifier_dataset(dataset_path)
        model, curve = train_classifier(samples, mcfg, t["epochs"], t["batch_size"], config["seed"], t["base_lr"])
    else:
        raise InvalidInputError(f"unknown training target {which!r}")
    meta = {"epochs": t["epochs"], "seed": config["seed"], "final_loss": curve[-1], "loss_curve": curve}
    save_mp_model(checkpoint_path, model, meta)
    return meta


# ------------------------------------------------------------------ evaluation


def selector_provider_from(config: dict, name: str, mp_checkpoint=None):
    arms = config["datagen"]["arms"]
    if name == "oracle":
        return oracle_selector_for
    if name == "random":
        seed = config["seed"]

        def provider(record, frame):
            return UniformRandomSelector(
                arms, rng_seed=[seed, record.object_id, record.trajectory_id], min_separation=3.0 * record.spec.resolution
            )

        return provider
    if name in ("dense", "classifier"):
        model, _ = load_mp_model(mp_checkpoint)
        selector = (
            DensePredictorSelector(model)
            if name == "dense"
            else ClassifierSelector(model, min_separation=0.03)
        )

        def provider(record, frame):
            return selector

        return provider
    raise InvalidInputError(f"unknown selector {name!r}")


def eval_stage(config: dict, policy_path, selector_name: str, mp_checkpoint=None, goal_records=None) -> dict:
    policy, _ = load_policy(policy_path)
    records = goal_records if goal_records is not None else eval_goal_records(config)
    provider = selector_provider_from(config, selector_name, mp_checkpoint)
    table = evaluate_suite(records, policy, provider, servo_config_from(config), camera_from(config))
    table["selector"] = selector_name
    return table


def format_eval_table(table: dict) -> str:
    lines = [f"selector: {table.get('selector', '?')}"]
    agg = table["aggregate"]
    for metric in ("chamfer", "node"):
        q = agg.get(metric)
        if q:
            lines.append(
                f"{metric:>8}: min {q['min']:.4g}  q25 {q['q25']:.4g}  median {q['median']:.4g}  "
                f"q75 {q['q75']:.4g}  max {q['max']:.4g}  mean {q['mean']:.4g}"
            )
    lines.append(f"mean steps: {agg['mean_steps']:.2f}  terminations: {agg['terminations']}")
    return "\n".join(lines)


# ------------------------------------------------------------------ RRT


def rrt_stage(config: dict, goal_records=None) -> dict:
    """Success rate across tolerance levels on a fixed goal suite + replay checks."""
    r = config["rrt"]
    camera = camera_from(config)
    n_points = config["sampling"]["n_points"]
    records = goal_records if goal_records is not None else eval_goal_records(config)
    records = records[: r["goals"]]
    rows = []
    for tol_idx, tol in enumerate(r["tolerances"]):
        successes = 0
        replays_ok = 0
        per_goal = []
        for record in records:
            frame = object_frame(PointCloud(record.rest_partial))
            goal_cloud = PointCloud(
                preprocess_observation(PointCloud(record.checkpoints[-1].partial), frame, n_points).points
            )
            mesh, _ = build_primitive(record.spec, record.material, record.fixed_face)
            sim = Simulator(mesh, record.material)
            grasp_world = record.grasp_points[0]
            sim.grasp(grasp_world)
            cfg = RrtConfig(
                tolerance=tol,
                step_translation=r["step_translation"],
                step_rotation=r["step_rotation"],
                max_iterations=r["max_iterations"],
                goal_bias=r["goal_bias"],
                action_frames=r["action_frames"],
                n_points=n_points,
                rng_seed=config["seed"] + 1000 * tol_idx + record.object_id * 17 + record.trajectory_id,
            )
            result = plan(sim, goal_cloud, cfg, camera, frame)
            replay_ok = None
            if result.success and result.path:
                mesh2, _ = build_primitive(record.spec, record.material, record.fixed_face)
                sim2 = Simulator(mesh2, record.material)
                sim2.grasp(grasp_world)
                final = replay_plan(sim2, result.path, cfg, camera, frame, goal_cloud)
                replay_ok = bool(final <= tol + 1e-9)
            successes += int(result.success)
            replays_ok += int(bool(replay_ok)) if replay_ok is not None else int(result.success and not result.path)
            per_goal.append(
                {
                    "object_id": record.object_id,
                    "trajectory_id": record.trajectory_id,
                    "success": result.success,
                    "nodes": result.nodes_expanded,
                    "best_chamfer": result.best_chamfer,
                    "path_len": len(result.path),
                    "replay_in_goal_region": replay_ok,
                }
            )
        rows.append(
            {
                "tolerance": tol,
                "success_rate": successes / len(records),
                "replayed_ok": replays_ok,
                "goals": per_goal,
            }
        )
    return {"tolerances": rows, "n_goals": len(records)}


# ------------------------------------------------------------------ tasks


def tissue_sim_from(config: dict, spec: PrimitiveSpec | None = None, material: Material | None = None, fixed_face=None) -> Simulator:
    cat = config["category"]
    if spec is None:
        spec, material = population_from(config, 1, config["seed"] + 31337)[0]
    mesh, _ = build_primitive(spec, material, cat["fixed_face"] if fixed_face is None else fixed_face)
    return Simulator(mesh, material, dt=config["datagen"]["dt"], gravity=tuple(config["datagen"]["gravity"]))


class _TrialContext:
    """Minimal record-like context for selector providers in task stages."""

    def __init__(self, trial: int, resolution: float):
        self.object_id = trial
        self.trajectory_id = 0
        self.spec = PrimitiveSpec("box", {"width": 1.0, "height": 1.0, "thickness": 1.0}, resolution)
        self.grasp_points = np.zeros((1, 3))


def retraction_stage(config: dict, policy_path, selector_name="dense", mp_checkpoint=None) -> dict:
    policy, _ = load_policy(policy_path)
    t = config["tasks"]["retraction"]
    camera = camera_from(config)
    servo_cfg = servo_config_from(config)
    provider = selector_provider_from(config, selector_name, mp_checkpoint)
    rng = np.random.default_rng(t["plane_seed"])
    trials = []
    for trial in range(t["trials"]):
        sim = tissue_sim_from(config)
        # random plane through the fixed edge, tilted toward +z by a random angle
        mesh = sim.mesh
        hinge_x = mesh.nodes[:, 0].min()
        angle = np.radians(rng.uniform(*t["angle_range_deg"]))
        azimuth = rng.uniform(-0.4, 0.4)
        base_normal = np.array([-np.sin(angle), 0.0, np.cos(angle)])
        normal = axis_angle_matrix([0, 0, 1.0], azimuth) @ base_normal
        plane = Plane.from_point_normal([hinge_x, 0.0, mesh.nodes[:, 2].min()], normal)
        goal = PlaneGoal(plane, t["shift_increment"], t["max_shifts"])
        frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
        selector = provider(_TrialContext(trial, mesh.resolution), frame)
        result = run_retraction(sim, policy, selector, goal, servo_cfg, camera)
        trials.append(
            {
                "trial": trial,
                "success": result.success,
                "shifts": result.shifts_used,
                "actions": result.total_actions,
                "reason": result.reason,
            }
        )
    successes = sum(1 for row in trials if row["success"])
    return {"trials": trials, "success_rate": successes / len(trials)}


def tube_connect_stage(config: dict, policy_path, trial_seed=None) -> dict:
    from ..nn.manip_point import FixedPointsSelector

    policy, _ = load_policy(policy_path)
    t = config["tasks"]["tube_connect"]
    camera = camera_from(config)
    servo_cfg = servo_config_from(config)
    rng = np.random.default_rng(t["curve_seed"] if trial_seed is None else trial_seed)
    radius, length, gap = t["tube_radius"], t["tube_length"], t["gap"]
    trials = []
    for trial in range(t["trials"]):
        spec = PrimitiveSpec("cylinder", {"radius": radius, "height": length}, config["category"]["resolution"])
        mat = Material(youngs_modulus=float(rng.uniform(3e3, 8e3)))
        # tube A occupies y in [gap/2, gap/2+L] with its far (+y) end fixed;
        # tube B is mirrored below with its far (-y) end fixed
        offset = gap / 2.0 + length / 2.0
        mesh_a = _shifted_mesh(build_primitive(spec, mat, "y_max")[0], [0.0, offset, 0.0])
        mesh_b = _shifted_mesh(build_primitive(spec, mat, "y_min")[0], [0.0, -offset, 0.0])
        sim_a = Simulator(mesh_a, mat, gravity=tuple(config["datagen"]["gravity"]))
        sim_b = Simulator(mesh_b, mat, gravity=tuple(config["datagen"]["gravity"]))

        mid_dip = float(rng.uniform(0.01, 0.03))
        side = float(rng.uniform(-0.02, 0.02))
        curve_pts = np.array(
            [
                [0.0, gap / 2.0 + length, 0.0],
                [side, 0.0, mid_dip],
                [0.0, -(gap / 2.0 + length), 0.0],
            ]
        )
        curve = CurveGoal(curve_pts, 2.0 * radius)
        free_a = sim_a.mesh.nodes[np.argmin(sim_a.mesh.nodes[:, 1])]
        free_b = sim_b.mesh.nodes[np.argmax(sim_b.mesh.nodes[:, 1])]
        frame_a = object_frame(render_partial_cloud(sim_a.state, sim_a.mesh, camera))
        frame_b = object_frame(render_partial_cloud(sim_b.state, sim_b.mesh, camera))
        selectors = (
            FixedPointsSelector(frame_a.inverse().apply(free_a[None, :])),
            FixedPointsSelector(frame_b.inverse().apply(free_b[None, :])),
        )
        result = run_tube_connect((sim_a, sim_b), policy, selectors, curve, servo_cfg, camera)
        trials.append(
            {
                "trial": trial,
                "end_gap": result.end_gap,
                "frechet": result.total_frechet,
                "steps": [r.steps for r in result.servo_results],
            }
        )
    gaps = [row["end_gap"] for row in trials]
    return {
        "trials": trials,
        "mean_gap": float(np.mean(gaps)),
        "mean_frechet": float(np.mean([row["frechet"] for row in trials])),
        "tube_radius": radius,
    }


def _shifted_mesh(mesh, offset):
    from ..softbody import TetMesh

    return TetMesh(mesh.nodes + np.asarray(offset), mesh.tets, mesh.surface, mesh.fixed, mesh.resolution)


def wrap_stage(config: dict, policy_path) -> dict:
    from ..nn.manip_point import FixedPointsSelector

    policy, _ = load_policy(policy_path)
    t = config["tasks"]["wrap"]
    camera = camera_from(config)
    servo_cfg = servo_config_from(config)
    rng = np.random.default_rng(t["pose_seed"])
    trials = []
    for trial in range(t["trials"]):
        spec, mat = population_from(config, 1, t["pose_seed"] + trial)[0]
        mesh, _ = build_primitive(spec, mat, "none")
        sim = Simulator(mesh, mat, gravity=tuple(config["datagen"]["gravity"]))
        tissue_len = spec.dims["height"]
        center = np.array([0.0, 0.0, -float(rng.uniform(0.04, 0.07))])
        goal = WrapGoal(center, [1.0, 0.0, 0.0], t["tube_length"], t["tube_radius"], tissue_len)
        frame = object_frame(render_partial_cloud(sim.state, sim.mesh, camera))
        ends = np.stack(
            [
                mesh.nodes[np.argmin(mesh.nodes[:, 1])],
                mesh.nodes[np.argmax(mesh.nodes[:, 1])],
            ]
        )
        selector = FixedPointsSelector(frame.inverse().apply(ends))
        result = run_wrap(sim, policy, selector, goal, servo_cfg, camera)
        trials.append(
            {
                "trial": trial,
                "coverage": result.coverage_percent,
                "steps": result.servo_result.steps if result.servo_result else None,
                "termination": result.servo_result.termination if result.servo_result else None,
            }
        )
    coverages = [row["coverage"] for row in trials]
    return {
        "trials": trials,
        "median_coverage": float(np.median(coverages)),
        "mean_coverage": float(np.mean(coverages)),
    }


# ------------------------------------------------------------------ plotting


def plot_stage(report_path, out_dir) -> list[str]:
    """Per-step metric curves (CSV) from an eval/servo report JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(report_path) as fh:
        report = json.load(fh)
    outputs = []
    goals = report.get("goals", [])
    curve_path = out_dir / "chamfer_curves.csv"
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["goal_index", "object_id", "trajectory_id", "step", "chamfer"])
        for gi, row in enumerate(goals):
            for si, value in enumerate(row.get("chamfer_series", [])):
                writer.writerow([gi, row.get("object_id"), row.get("trajectory_id"), si, repr(value)])
    outputs.append(str(curve_path))
    summary_path = out_dir / "aggregate.json"
    write_json(summary_path, report.get("aggregate", {}))
    outputs.append(str(summary_path))
    return outputs
