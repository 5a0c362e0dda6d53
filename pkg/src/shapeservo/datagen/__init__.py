"""Training-data generation and the dataset file format."""

from .container import read_dataset, write_dataset
from .samples import (
    MPSample,
    TrainingSample,
    build_classifier_samples,
    build_mp_samples,
    build_policy_samples,
    classifier_thresholds,
)
from .trajectories import (
    Checkpoint,
    GenerationSettings,
    TrajectoryRecord,
    generate_trajectories,
    load_trajectories,
    save_trajectories,
)

__all__ = [
    "Checkpoint",
    "GenerationSettings",
    "MPSample",
    "TrainingSample",
    "TrajectoryRecord",
    "build_classifier_samples",
    "build_mp_samples",
    "build_policy_samples",
    "classifier_thresholds",
    "generate_trajectories",
    "load_trajectories",
    "read_dataset",
    "save_trajectories",
    "write_dataset",
]
