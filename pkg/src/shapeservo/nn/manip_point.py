"""Manipulation-point selection: dense predictor, candidate classifier, baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ConfigurationError, InvalidCandidateError, TrainingDivergedError
from ..geometry import PointCloud
from .pointconv import (
    GROUPS,
    FeatureExtractor,
    FeaturePropagation,
    PyramidBatch,
    build_pyramid,
)
from .policy import PyramidStore, _head, learning_rate


@dataclass(frozen=True)
class MPConfig:
    arms: int = 1
    n_points: int = 256

    def __post_init__(self):
        if self.arms not in (1, 2):
            raise ConfigurationError("arms must be 1 or 2")
        if self.n_points % 4:
            raise ConfigurationError("n_points must be divisible by 4")

    @property
    def mask_k(self) -> int:
        # candidate mask marks the 50-of-1024 nearest points, scaled
        return max(1, int(round(50 * self.n_points / 1024)))

    def to_dict(self) -> dict:
        return {"arms": self.arms, "n_points": self.n_points}


@dataclass
class MPSelection:
    """Chosen manipulation point(s) plus the scores that ranked them."""

    points: np.ndarray  # (arms, 3)
    likelihoods: np.ndarray | None = None  # dense: (arms, P) softmax; classifier: per candidate
    candidates: np.ndarray | None = None  # classifier: evaluated candidate points


class DensePredictorNet(nn.Module):
    """Encoder-decoder emitting a per-point manipulation likelihood per arm.

    One shared encoder-decoder processes the current and the goal cloud; the
    two 64-channel outputs are concatenated and fused by pointwise convolutions
    into ``arms`` score maps.
    """

    def __init__(self, config: MPConfig):
        super().__init__()
        self.config = config
        self.encoder = FeatureExtractor(3)
        self.fp2 = FeaturePropagation(256, 128, 128)
        self.fp1 = FeaturePropagation(128, 64, 64)
        self.fp0 = FeaturePropagation(64, 3, 64)
        self.fuse = nn.Sequential(
            nn.Conv1d(128, 128, 1),
            nn.GroupNorm(GROUPS, 128),
            nn.ReLU(),
            nn.Conv1d(128, 64, 1),
            nn.GroupNorm(GROUPS, 64),
            nn.ReLU(),
            nn.Conv1d(64, config.arms, 1),
        )

    def _branch(self, feats, pyr: PyramidBatch):
        global_feat, (f1, f2) = self.encoder(feats, pyr, return_stages=True)
        d2 = self.fp2(global_feat.unsqueeze(1), f2, None, None)
        d1 = self.fp1(d2, f1, pyr.fp_idx[0], pyr.fp_w[0])
        return self.fp0(d1, pyr.xyz[0], pyr.fp_idx[1], pyr.fp_w[1])  # (B, N, 64)

    def forward(self, cur_feats, cur_pyr, goal_feats, goal_pyr):
        dc = self._branch(cur_feats, cur_pyr)
        dg = self._branch(goal_feats, goal_pyr)
        fused = torch.cat([dc, dg], dim=-1).transpose(1, 2)  # (B, 128, N)
        return self.fuse(fused)  # (B, arms, N) logits


class CandidateClassifierNet(nn.Module):
    """Policy-shaped network scoring one candidate point (encoded as a mask)."""

    def __init__(self, config: MPConfig):
        super().__init__()
        self.config = config
        self.extractor_current = FeatureExtractor(4)  # xyz + candidate mask
        self.extractor_goal = FeatureExtractor(3)
        self.head = _head(2 * 256, 1)

    def forward(self, cur_feats, cur_pyr, goal_feats, goal_pyr):
        psi_c = self.extractor_current(cur_feats, cur_pyr)
        psi_g = self.extractor_goal(goal_feats, goal_pyr)
        return self.head(torch.cat([psi_c, psi_g], dim=1)).squeeze(-1)  # logits


def candidate_mask(points: np.ndarray, candidate: np.ndarray, k: int) -> np.ndarray:
    dist = np.linalg.norm(points - candidate, axis=1)
    order = np.argsort(dist, kind="stable")
    mask = np.zeros(len(points))
    mask[order[: min(k, len(points))]] = 1.0
    return mask


def dense_predict(model: DensePredictorNet, current: np.ndarray, goal: np.ndarray) -> MPSelection:
    """Per-arm softmax likelihood over the current cloud; argmax points."""
    cfg = model.config
    if current.shape[1] != cfg.n_points or goal.shape[1] != cfg.n_points:
        raise ConfigurationError("cloud size does not match model n_points")
    cur_xyz = current[:3].T
    cur_pyr = PyramidBatch([build_pyramid(cur_xyz, with_fp=True)])
    goal_pyr = PyramidBatch([build_pyramid(goal[:3].T, with_fp=True)])
    cur_feats = torch.as_tensor(cur_xyz[None], dtype=torch.float32)
    goal_feats = torch.as_tensor(goal[:3].T[None], dtype=torch.float32)
    with torch.no_grad():
        logits = model(cur_feats, cur_pyr, goal_feats, goal_pyr)[0]
        probs = torch.softmax(logits, dim=-1).numpy().astype(np.float64)
    idx = probs.argmax(axis=1)  # ties: lowest index
    return MPSelection(points=cur_xyz[idx], likelihoods=probs)


def classify_candidate(
    model: CandidateClassifierNet,
    current: np.ndarray,
    goal: np.ndarray,
    candidate,
    on_cloud_tol: float | None = None,
) -> float:
    """Sigmoid likelihood of one candidate being a good manipulation point."""
    cfg = model.config
    cur_xyz = current[:3].T
    candidate = np.asarray(candidate, dtype=np.float64)
    nearest = float(np.linalg.norm(cur_xyz - candidate, axis=1).min())
    if on_cloud_tol is None:
        spacing = np.linalg.norm(cur_xyz - cur_xyz[0], axis=1)
        on_cloud_tol = 4.0 * float(np.partition(spacing, 1)[1] + 1e-6)
    if nearest > on_cloud_tol:
        raise InvalidCandidateError(f"candidate {candidate.tolist()} is {nearest:.4f} m off the cloud")
    mask = candidate_mask(cur_xyz, candidate, cfg.mask_k)
    cur_feats = torch.as_tensor(np.concatenate([cur_xyz, mask[:, None]], axis=1)[None], dtype=torch.float32)
    goal_feats = torch.as_tensor(goal[:3].T[None], dtype=torch.float32)
    cur_pyr = PyramidBatch([build_pyramid(cur_xyz)])
    goal_pyr = PyramidBatch([build_pyramid(goal[:3].T)])
    with torch.no_grad():
        logit = model(cur_feats, cur_pyr, goal_feats, goal_pyr)[0]
    return float(torch.sigmoid(logit))


def select_by_classifier(
    model: CandidateClassifierNet,
    current: np.ndarray,
    goal: np.ndarray,
    n_candidates: int = 64,
    rng_seed: int = 0,
    min_separation: float = 0.0,
) -> MPSelection:
    """Evaluate uniformly sampled candidates; pick the best per arm.

    Cost grows linearly in ``n_candidates`` (one forward pass per candidate).
    Bimanual picks are constrained to be at least ``min_separation`` apart.
    """
    cfg = model.config
    cur_xyz = current[:3].T
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(cur_xyz), size=min(n_candidates, len(cur_xyz)), replace=False)
    candidates = cur_xyz[idx]
    scores = np.array([classify_candidate(model, current, goal, c) for c in candidates])
    order = np.argsort(-scores, kind="stable")
    chosen = [candidates[order[0]]]
    if cfg.arms == 2:
        second = None
        for j in order[1:]:
            if np.linalg.norm(candidates[j] - chosen[0]) >= min_separation:
                second = candidates[j]
                break
        chosen.append(second if second is not None else candidates[order[min(1, len(order) - 1)]])
    return MPSelection(points=np.stack(chosen), likelihoods=scores[None, :], candidates=candidates)


# ------------------------------------------------------------------ training


def train_dense_predictor(
    samples,
    config: MPConfig,
    epochs: int = 100,
    batch_size: int = 64,
    rng_seed: int = 0,
    base_lr: float = 1e-3,
):
    """Cross-entropy over per-point softmax, per arm; step-decay schedule."""
    if not samples:
        raise ConfigurationError("empty training set")
    torch.manual_seed(rng_seed)
    model = DensePredictorNet(config)
    cur = torch.as_tensor(np.stack([s.current[:3].T for s in samples]), dtype=torch.float32)
    goal = torch.as_tensor(np.stack([s.goal[:3].T for s in samples]), dtype=torch.float32)
    labels = torch.as_tensor(np.stack([s.label_index for s in samples]), dtype=torch.long)
    cur_store = PyramidStore([s.current[:3].T for s in samples], with_fp=True)
    goal_store = PyramidStore([s.goal[:3].T for s in samples], with_fp=True)

    optimizer = torch.optim.Adam(model.parameters(), lr=base_lr)
    rng = np.random.default_rng(rng_seed)
    curve = []
    ce = nn.CrossEntropyLoss()
    for epoch in range(epochs):
        for group in optimizer.param_groups:
            group["lr"] = learning_rate(epoch, base_lr)
        perm = rng.permutation(len(samples))
        total, seen = 0.0, 0
        for start in range(0, len(samples), batch_size):
            idx = torch.as_tensor(perm[start : start + batch_size])
            logits = model(cur[idx], cur_store.batch(idx), goal[idx], goal_store.batch(idx))
            loss = sum(ce(logits[:, arm, :], labels[idx][:, arm]) for arm in range(config.arms))
            loss = loss / config.arms
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        epoch_loss = total / seen
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        curve.append(epoch_loss)
    return model, curve


def train_classifier(
    samples,
    config: MPConfig,
    epochs: int = 100,
    batch_size: int = 64,
    rng_seed: int = 0,
    base_lr: float = 1e-3,
):
    """Binary cross-entropy on candidate/label pairs; step-decay schedule."""
    if not samples:
        raise ConfigurationError("empty training set")
    torch.manual_seed(rng_seed)
    model = CandidateClassifierNet(config)
    masked = []
    for s in samples:
        xyz = s.current[:3].T
        mask = candidate_mask(xyz, s.candidate, config.mask_k)
        masked.append(np.concatenate([xyz, mask[:, None]], axis=1))
    cur = torch.as_tensor(np.stack(masked), dtype=torch.float32)
    goal = torch.as_tensor(np.stack([s.goal[:3].T for s in samples]), dtype=torch.float32)
    labels = torch.as_tensor(np.array([s.label for s in samples]), dtype=torch.float32)
    cur_store = PyramidStore([s.current[:3].T for s in samples])
    goal_store = PyramidStore([s.goal[:3].T for s in samples])

    optimizer = torch.optim.Adam(model.parameters(), lr=base_lr)
    rng = np.random.default_rng(rng_seed)
    bce = nn.BCEWithLogitsLoss()
    curve = []
    for epoch in range(epochs):
        for group in optimizer.param_groups:
            group["lr"] = learning_rate(epoch, base_lr)
        perm = rng.permutation(len(samples))
        total, seen = 0.0, 0
        for start in range(0, len(samples), batch_size):
            idx = torch.as_tensor(perm[start : start + batch_size])
            logits = model(cur[idx], cur_store.batch(idx), goal[idx], goal_store.batch(idx))
            loss = bce(logits, labels[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        epoch_loss = total / seen
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        curve.append(epoch_loss)
    return model, curve


# ------------------------------------------------------------------ selectors


class FixedPointsSelector:
    """Returns preset object-frame points (oracle / task-scripted grasps)."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))

    def select(self, current: PointCloud, goal: PointCloud) -> np.ndarray:
        return self.points.copy()


class OracleSelector(FixedPointsSelector):
    """Recorded ground-truth grasp of the trajectory that produced the goal."""


class UniformRandomSelector:
    """Uniform random cloud points; the lower baseline for selector comparisons."""

    def __init__(self, arms: int = 1, rng_seed: int = 0, min_separation: float = 0.0):
        self.arms = arms
        self.rng = np.random.default_rng(rng_seed)
        self.min_separation = min_separation

    def select(self, current: PointCloud, goal: PointCloud) -> np.ndarray:
        pts = current.points
        first = pts[self.rng.integers(len(pts))]
        if self.arms == 1:
            return first[None, :]
        for _ in range(100):
            second = pts[self.rng.integers(len(pts))]
            if np.linalg.norm(second - first) >= self.min_separation:
                return np.stack([first, second])
        return np.stack([first, second])


class DensePredictorSelector:
    def __init__(self, model: DensePredictorNet):
        self.model = model

    def select(self, current: PointCloud, goal: PointCloud) -> np.ndarray:
        return dense_predict(self.model, current.as_matrix(), goal.as_matrix()).points


class ClassifierSelector:
    def __init__(self, model: CandidateClassifierNet, n_candidates: int = 64, rng_seed: int = 0, min_separation: float = 0.0):
        self.model = model
        self.n_candidates = n_candidates
        self.rng_seed = rng_seed
        self.min_separation = min_separation

    def select(self, current: PointCloud, goal: PointCloud) -> np.ndarray:
        return select_by_classifier(
            self.model,
            current.as_matrix(),
            goal.as_matrix(),
            self.n_candidates,
            self.rng_seed,
            self.min_separation,
        ).points
