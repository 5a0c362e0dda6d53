"""Supervised sample construction for the policy, dense predictor, and classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GenerationError
from ..geometry import PointCloud, object_frame, rot6d_encode
from ..sensing import preprocess_observation
from .trajectories import TrajectoryRecord


@dataclass
class TrainingSample:
    """Policy supervision: masked current cloud, goal cloud, relative transforms."""

    current: np.ndarray  # (3 + arms, n_points)
    goal: np.ndarray  # (3, n_points)
    target: np.ndarray  # (arms, 9): translation (3) + 6D rotation (6)


@dataclass
class MPSample:
    """Manipulation-point supervision (dense-predictor or classifier flavor)."""

    current: np.ndarray  # (3, n_points)
    goal: np.ndarray  # (3, n_points)
    label_index: np.ndarray | None = None  # (arms,) dense-predictor point indices
    candidate: np.ndarray | None = None  # (3,) classifier candidate point
    label: float | None = None  # classifier 0/1


class _ObservationCache:
    """Preprocessed checkpoint observations, shared across drawn samples."""

    def __init__(self, trajectories, n_points, k_nearest):
        self.trajectories = trajectories
        self.n_points = n_points
        self.k_nearest = k_nearest
        self.frames = {}
        self.cache = {}

    def frame(self, t_idx):
        if t_idx not in self.frames:
            rec = self.trajectories[t_idx]
            self.frames[t_idx] = object_frame(PointCloud(rec.rest_partial))
        return self.frames[t_idx]

    def observe(self, t_idx, ck_idx, with_masks):
        key = (t_idx, ck_idx, with_masks)
        if key not in self.cache:
            rec = self.trajectories[t_idx]
            ck = rec.checkpoints[ck_idx]
            mps = list(ck.mp) if with_masks else None
            cloud = preprocess_observation(
                PointCloud(ck.partial), self.frame(t_idx), self.n_points, mps, self.k_nearest
            )
            self.cache[key] = cloud
        return self.cache[key]


def _relative_action(rec: TrajectoryRecord, i: int) -> np.ndarray:
    last = rec.checkpoints[-1].poses
    now = rec.checkpoints[i].poses
    rows = []
    for arm in range(rec.arms):
        rel = now[arm].inverse().compose(last[arm])
        rows.append(np.concatenate([rel.translation, rot6d_encode(rel.rotation)]))
    return np.stack(rows)


def build_policy_samples(
    trajectories: list[TrajectoryRecord],
    count: int = 20000,
    rng_seed: int = 0,
    n_points: int = 1024,
    k_nearest: int = 50,
) -> list[TrainingSample]:
    """Uniformly sampled (checkpoint i, goal M) pairs with relative-pose targets."""
    if not trajectories:
        raise GenerationError("no trajectories to sample from")
    rng = np.random.default_rng(rng_seed)
    cache = _ObservationCache(trajectories, n_points, k_nearest)
    samples = []
    for _ in range(count):
        t_idx = int(rng.integers(len(trajectories)))
        rec = trajectories[t_idx]
        i = int(rng.integers(1, len(rec.checkpoints) + 1))  # 1-based, M included
        current = cache.observe(t_idx, i - 1, True)
        goal = cache.observe(t_idx, len(rec.checkpoints) - 1, False)
        samples.append(
            TrainingSample(current.as_matrix(), goal.as_matrix(), _relative_action(rec, i - 1))
        )
    return samples


def build_mp_samples(
    trajectories: list[TrajectoryRecord],
    count: int = 20000,
    rng_seed: int = 0,
    n_points: int = 1024,
) -> list[MPSample]:
    """Dense-predictor samples: per-arm index of the cloud point nearest to p_m."""
    if not trajectories:
        raise GenerationError("no trajectories to sample from")
    rng = np.random.default_rng(rng_seed)
    cache = _ObservationCache(trajectories, n_points, 0)
    samples = []
    for _ in range(count):
        t_idx = int(rng.integers(len(trajectories)))
        rec = trajectories[t_idx]
        i = int(rng.integers(1, len(rec.checkpoints) + 1))
        current = cache.observe(t_idx, i - 1, False)
        goal = cache.observe(t_idx, len(rec.checkpoints) - 1, False)
        frame_inv = cache.frame(t_idx).inverse()
        mp_obj = frame_inv.apply(rec.checkpoints[i - 1].mp)
        labels = np.array(
            [int(np.argmin(np.linalg.norm(current.points - p, axis=1))) for p in mp_obj]
        )
        samples.append(MPSample(current.as_matrix(), goal.as_matrix(), label_index=labels))
    return samples


def classifier_thresholds(n_points: int) -> tuple[int, int]:
    """Near/far candidate pools, scaled from the 50/800-of-1024 convention."""
    near = max(1, int(round(50 * n_points / 1024)))
    far = max(1, int(round(800 * n_points / 1024)))
    return near, far


def build_classifier_samples(
    trajectories: list[TrajectoryRecord],
    count: int = 100000,
    rng_seed: int = 0,
    n_points: int = 1024,
) -> list[MPSample]:
    """Candidate/label pairs: 5 positives from the nearest pool, 5 negatives
    from the furthest pool, per base sample and arm (10 derived per base)."""
    if not trajectories:
        raise GenerationError("no trajectories to sample from")
    rng = np.random.default_rng(rng_seed)
    cache = _ObservationCache(trajectories, n_points, 0)
    near_n, far_n = classifier_thresholds(n_points)
    samples: list[MPSample] = []
    while len(samples) < count:
        t_idx = int(rng.integers(len(trajectories)))
        rec = trajectories[t_idx]
        i = int(rng.integers(1, len(rec.checkpoints) + 1))
        current = cache.observe(t_idx, i - 1, False)
        goal = cache.observe(t_idx, len(rec.checkpoints) - 1, False)
        frame_inv = cache.frame(t_idx).inverse()
        arm = int(rng.integers(rec.arms))
        p = frame_inv.apply(rec.checkpoints[i - 1].mp[arm : arm + 1])[0]
        order = np.argsort(np.linalg.norm(current.points - p, axis=1), kind="stable")
        positives = order[:near_n][rng.choice(near_n, size=5, replace=near_n < 5)]
        negatives = order[-far_n:][rng.choice(far_n, size=5, replace=far_n < 5)]
        for idx in positives:
            samples.append(
                MPSample(current.as_matrix(), goal.as_matrix(), candidate=current.points[idx], label=1.0)
            )
        for idx in negatives:
            samples.append(
                MPSample(current.as_matrix(), goal.as_matrix(), candidate=current.points[idx], label=0.0)
            )
    return samples[:count]
