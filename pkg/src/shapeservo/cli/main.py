"""Command-line entry point.

Exit codes: 0 success; 2 config schema violation / bad arguments; 3 missing
file; 4 checkpoint or version mismatch; 5 simulation/training/generation
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import (
    ConfigurationError,
    GenerationError,
    InvalidInputError,
    ShapeServoError,
    SimulationDivergedError,
    TrainingDivergedError,
)
from . import workspace
from .config import config_hash, load_config, write_json, write_manifest

EXIT_SCHEMA = 2
EXIT_MISSING = 3
EXIT_VERSION = 4
EXIT_RUNTIME = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapeservo",
        description="Desk-scale workbench for goal-driven deformable-object shape servoing",
    )
    parser.add_argument("--config", help="run-config JSON file (merged over the profile)")
    parser.add_argument("--profile", choices=["desk", "paper"], help="base profile")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, default=1, help="worker processes for generation")
    parser.add_argument("--output-dir", help="override config output_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate trajectories and training datasets")

    p_train = sub.add_parser("train", help="train a model from a dataset")
    p_train.add_argument("target", choices=["policy", "dense", "classifier"])
    p_train.add_argument("--dataset", help="dataset container (defaults to gen-data output)")
    p_train.add_argument("--out", help="checkpoint path")
    p_train.add_argument("--no-masks", action="store_true", help="ablation: hide MP channels")
    p_train.add_argument("--translation-only", action="store_true", help="ablation: position-only actions")

    p_servo = sub.add_parser("servo", help="run one closed-loop servo on an eval goal")
    p_servo.add_argument("--policy", required=True)
    p_servo.add_argument("--selector", default="oracle", choices=["oracle", "dense", "classifier", "random"])
    p_servo.add_argument("--mp-model")
    p_servo.add_argument("--goal-index", type=int, default=0)
    p_servo.add_argument("--save-clouds", action="store_true")

    p_eval = sub.add_parser("eval", help="evaluate on the held-out goal suite")
    p_eval.add_argument("--policy", required=True)
    p_eval.add_argument("--selector", default="oracle", choices=["oracle", "dense", "classifier", "random"])
    p_eval.add_argument("--mp-model")

    p_abl = sub.add_parser("ablate", help="compare full/no-MP-input/no-orientation variants")
    p_abl.add_argument("--full", required=True)
    p_abl.add_argument("--no-mask", required=True)
    p_abl.add_argument("--translation-only", required=True)

    sub.add_parser("baseline-rrt", help="RRT baseline success rates across tolerances")

    p_task = sub.add_parser("task", help="surgery-inspired task harnesses")
    p_task.add_argument("name", choices=["retraction", "tube-connect", "wrap"])
    p_task.add_argument("--policy", required=True)
    p_task.add_argument("--selector", default="dense", choices=["oracle", "dense", "classifier", "random"])
    p_task.add_argument("--mp-model")

    p_plot = sub.add_parser("plot", help="export metric curves / cloud snapshots as CSV")
    p_plot.add_argument("--report", required=True)
    p_plot.add_argument("--out")
    return parser


def _require(path, what: str):
    if path is None:
        raise FileNotFoundError(f"{what} path required but not given")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _default_paths(config) -> dict:
    out = Path(config["output_dir"])
    return {
        "policy_ds": out / "datasets" / "policy.dssv",
        "dense_ds": out / "datasets" / "dense.dssv",
        "classifier_ds": out / "datasets" / "classifier.dssv",
        "policy_ckpt": out / "checkpoints" / "policy.dnpm",
        "dense_ckpt": out / "checkpoints" / "dense.dnmp",
        "classifier_ckpt": out / "checkpoints" / "classifier.dnmp",
        "reports": out / "reports",
    }


def run_command(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    config = load_config(args.config, args.profile, overrides)
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _default_paths(config)

    if args.command == "gen-data":
        outputs = workspace.gen_data(config, workers=args.workers)
        flat = outputs["trajectories"] + [v for k, v in outputs.items() if k != "trajectories"]
        write_manifest(out_dir, "gen-data", config, flat)
        print(f"gen-data: {len(outputs['trajectories'])} trajectory files, datasets under {out_dir / 'datasets'}")
        return 0

    if args.command == "train":
        default_ds = {"policy": paths["policy_ds"], "dense": paths["dense_ds"], "classifier": paths["classifier_ds"]}
        dataset = _require(args.dataset or default_ds[args.target], f"{args.target} dataset")
        default_ckpt = {"policy": paths["policy_ckpt"], "dense": paths["dense_ckpt"], "classifier": paths["classifier_ckpt"]}
        ckpt = Path(args.out or default_ckpt[args.target])
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        variant = {}
        if args.no_masks:
            variant["with_masks"] = False
        if args.translation_only:
            variant["translation_only"] = True
        meta = workspace.train_stage(config, args.target, dataset, ckpt, variant)
        write_manifest(out_dir, f"train {args.target}", config, [str(ckpt)], {"final_loss": meta["final_loss"]})
        print(f"train {args.target}: final loss {meta['final_loss']:.6g} -> {ckpt}")
        return 0

    if args.command == "eval":
        policy = _require(args.policy, "policy checkpoint")
        mp = _require(args.mp_model, "mp checkpoint") if args.selector in ("dense", "classifier") else None
        table = workspace.eval_stage(config, policy, args.selector, mp)
        paths["reports"].mkdir(parents=True, exist_ok=True)
        report = paths["reports"] / f"eval_{args.selector}.json"
        write_json(report, table)
        write_manifest(out_dir, f"eval {args.selector}", config, [str(report)], table["aggregate"])
        print(workspace.format_eval_table(table))
        print(f"report: {report}")
        return 0

    if args.command == "servo":
        policy_path = _require(args.policy, "policy checkpoint")
        mp = _require(args.mp_model, "mp checkpoint") if args.selector in ("dense", "classifier") else None
        from ..datagen import write_dataset
        from ..nn import load_policy
        from ..servo import goal_from_record, run_servo

        records = workspace.eval_goal_records(config)
        if not 0 <= args.goal_index < len(records):
            raise InvalidInputError(f"goal index {args.goal_index} outside suite of {len(records)}")
        record = records[args.goal_index]
        servo_cfg = workspace.servo_config_from(config)
        if args.save_clouds:
            from dataclasses import replace

            servo_cfg = replace(servo_cfg, collect_clouds=True)
        frame, goal_cloud, goal_full, sim = goal_from_record(record, servo_cfg)
        provider = workspace.selector_provider_from(config, args.selector, mp)
        policy, _ = load_policy(policy_path)
        result = run_servo(
            sim, policy, provider(record, frame), goal_cloud, servo_cfg,
            workspace.camera_from(config), frame, goal_full,
        )
        paths["reports"].mkdir(parents=True, exist_ok=True)
        report = paths["reports"] / f"servo_goal{args.goal_index:03d}.json"
        write_json(report, result.as_dict())
        outputs = [str(report)]
        if args.save_clouds and result.cloud_series:
            snap = paths["reports"] / f"servo_goal{args.goal_index:03d}_clouds.dssv"
            write_dataset(
                snap,
                [{"cloud": c} for c in result.cloud_series],
                {"kind": "cloud_snapshots", "goal_index": args.goal_index},
            )
            outputs.append(str(snap))
        write_manifest(out_dir, "servo", config, outputs, result.as_dict())
        print(f"servo: {result.termination} after {result.steps} steps, final chamfer {result.final_chamfer:.4g}")
        return 0

    if args.command == "ablate":
        rows = {}
        records = workspace.eval_goal_records(config)
        for label, ckpt in (
            ("full", args.full),
            ("no_manipulation_point", args.no_mask),
            ("no_orientation", args.translation_only),
        ):
            table = workspace.eval_stage(config, _require(ckpt, f"{label} checkpoint"), "oracle", goal_records=records)
            rows[label] = table["aggregate"]
        paths["reports"].mkdir(parents=True, exist_ok=True)
        report = paths["reports"] / "ablation.json"
        write_json(report, {"variants": rows})
        write_manifest(out_dir, "ablate", config, [str(report)], rows)
        for label, agg in rows.items():
            node = agg["node"]["median"] if agg["node"] else float("nan")
            cham = agg["chamfer"]["median"] if agg["chamfer"] else float("nan")
            print(f"{label:>24}: median node {node:.6g}  median chamfer {cham:.6g}")
        return 0

    if args.command == "baseline-rrt":
        table = workspace.rrt_stage(config)
        paths["reports"].mkdir(parents=True, exist_ok=True)
        report = paths["reports"] / "rrt.json"
        write_json(report, table)
        write_manifest(out_dir, "baseline-rrt", config, [str(report)], {
            "success_rates": {str(row["tolerance"]): row["success_rate"] for row in table["tolerances"]},
        })
        for row in table["tolerances"]:
            print(f"tolerance {row['tolerance']:g}: success rate {row['success_rate']:.2f}")
        return 0

    if args.command == "task":
        policy = _require(args.policy, "policy checkpoint")
        mp = _require(args.mp_model, "mp checkpoint") if args.selector in ("dense", "classifier") else None
        if args.name == "retraction":
            table = workspace.retraction_stage(config, policy, args.selector, mp)
            headline = f"success rate {table['success_rate']:.2f}"
        elif args.name == "tube-connect":
            table = workspace.tube_connect_stage(config, policy)
            headline = f"mean gap {table['mean_gap']:.4g} m, mean frechet {table['mean_frechet']:.4g} m"
        else:
            table = workspace.wrap_stage(config, policy)
            headline = f"median coverage {table['median_coverage']:.1f}%"
        paths["reports"].mkdir(parents=True, exist_ok=True)
        report = paths["reports"] / f"task_{args.name.replace('-', '_')}.json"
        write_json(report, table)
        write_manifest(out_dir, f"task {args.name}", config, [str(report)], table)
        print(f"task {args.name}: {headline}")
        return 0

    if args.command == "plot":
        report = _require(args.report, "report")
        out = args.out or (paths["reports"] / "plots")
        outputs = workspace.plot_stage(report, out)
        write_manifest(out_dir, "plot", config, outputs)
        print("wrote: " + ", ".join(outputs))
        return 0

    raise InvalidInputError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SimulationDivergedError, TrainingDivergedError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ShapeServoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
