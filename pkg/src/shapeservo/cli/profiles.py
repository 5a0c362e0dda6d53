"""Built-in run profiles: desk (minutes on a laptop core) and paper (full scale)."""

DESK_PROFILE = {
    "version": 1,
    "seed": 0,
    "output_dir": "runs/desk",
    "category": {
        "kind": "box",
        "dimension_ranges": {
            "width": [0.09, 0.12],
            "thickness": [0.015, 0.025],
            "aspect": [0.6, 0.9],
        },
        "stiffness_gaussian": [5000.0, 1000.0],
        "resolution": 0.02,
        "fixed_face": "x_min",
        "count": 40,
    },
    "datagen": {
        "arms": 1,
        "trajectories_per_grasp": 5,
        "checkpoint_stride": 15,
        "checkpoints": 4,
        "raw_points": 512,
        "settle_frames": 20,
        "translation_factor": 0.5,
        "max_rotation_deg": 60.0,
        "dt": 0.005,
        "gravity": [0.0, 0.0, -9.81],
    },
    "camera": {
        "distance": 0.5,
        "azimuth_deg": 0.0,
        "elevation_deg": 45.0,
        "resolution": 128,
    },
    "sampling": {
        "policy_count": 2000,
        "mp_count": 2000,
        "classifier_count": 4000,
        "n_points": 256,
        "k_nearest": 50,
    },
    "training": {
        "epochs": 60,
        "batch_size": 64,
        "base_lr": 0.001,
        "with_masks": True,
        "translation_only": False,
    },
    "servo": {
        "epsilon_translation": 0.003,
        "epsilon_rotation_deg": 2.0,
        "max_steps": 10,
        "action_frames": 15,
        "settle_frames": 20,
    },
    "eval": {"objects": 5, "goals_per_object": 4, "goal_seed": 9090},
    "rrt": {
        "tolerances": [0.02, 0.05, 0.1],
        "step_translation": 0.015,
        "step_rotation": 0.25,
        "max_iterations": 150,
        "goal_bias": 0.25,
        "action_frames": 8,
        "goals": 10,
    },
    "tasks": {
        "retraction": {
            "trials": 20,
            "plane_seed": 4242,
            "shift_increment": 0.005,
            "max_shifts": 4,
            "angle_range_deg": [15.0, 45.0],
        },
        "tube_connect": {"trials": 10, "curve_seed": 555, "tube_radius": 0.012, "tube_length": 0.09, "gap": 0.05},
        "wrap": {
            "trials": 10,
            "pose_seed": 777,
            "tube_radius": 0.012,
            "tube_length": 0.1,
            "rays": 2000,
        },
    },
}

# paper-scale profile: the counts and shapes the original experiments report
PAPER_PROFILE = {
    **DESK_PROFILE,
    "output_dir": "runs/paper",
    "category": {
        **DESK_PROFILE["category"],
        "count": 300,
    },
    "datagen": {
        **DESK_PROFILE["datagen"],
        "trajectories_per_grasp": 10,
        "checkpoints": 7,
        "raw_points": 2048,
    },
    "camera": {**DESK_PROFILE["camera"], "resolution": 256},
    "sampling": {
        **DESK_PROFILE["sampling"],
        "policy_count": 20000,
        "mp_count": 20000,
        "classifier_count": 100000,
        "n_points": 1024,
    },
    "training": {**DESK_PROFILE["training"], "epochs": 150},
    "eval": {"objects": 10, "goals_per_object": 10, "goal_seed": 9090},
}

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}
