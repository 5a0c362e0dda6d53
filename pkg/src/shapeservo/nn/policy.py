"""Shape-servo policy: dual feature extractors, fully connected action head."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..errors import ConfigurationError, DegenerateRotationError, TrainingDivergedError
from ..geometry import RigidTransform, rot6d_decode
from .pointconv import GROUPS, FeatureExtractor, PyramidBatch, build_pyramid

HEAD_WIDTHS = (256, 128, 64)


@dataclass(frozen=True)
class PolicyConfig:
    arms: int = 1
    n_points: int = 256
    with_masks: bool = True  # ablation: hide manipulation-point channels
    translation_only: bool = False  # ablation: position-only action space
    lambda_rot: float = 1.0

    def __post_init__(self):
        if self.arms not in (1, 2):
            raise ConfigurationError("arms must be 1 or 2")
        if self.n_points % 4:
            raise ConfigurationError("n_points must be divisible by 4")

    @property
    def current_channels(self) -> int:
        return 3 + (self.arms if self.with_masks else 0)

    @property
    def output_dim(self) -> int:
        return 3 * self.arms + (0 if self.translation_only else 6 * self.arms)

    def to_dict(self) -> dict:
        return {
            "arms": self.arms,
            "n_points": self.n_points,
            "with_masks": self.with_masks,
            "translation_only": self.translation_only,
            "lambda_rot": self.lambda_rot,
        }


def _head(in_dim: int, out_dim: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    prev = in_dim
    for width in HEAD_WIDTHS:
        layers += [nn.Linear(prev, width), nn.GroupNorm(GROUPS, width), nn.ReLU()]
        prev = width
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


class PolicyNet(nn.Module):
    """π(current cloud + masks, goal cloud) -> raw action vector."""

    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        self.extractor_current = FeatureExtractor(config.current_channels)
        self.extractor_goal = FeatureExtractor(3)
        self.head = _head(2 * 256, config.output_dim)

    def forward(self, cur_feats, cur_pyr: PyramidBatch, goal_feats, goal_pyr: PyramidBatch):
        psi_c = self.extractor_current(cur_feats, cur_pyr)
        psi_g = self.extractor_goal(goal_feats, goal_pyr)
        return self.head(torch.cat([psi_c, psi_g], dim=1))


def rot6d_to_matrix(r6: torch.Tensor) -> torch.Tensor:
    """Differentiable Gram-Schmidt decode, (..., 6) -> (..., 3, 3)."""
    a1, a2 = r6[..., :3], r6[..., 3:]
    b1 = torch.nn.functional.normalize(a1, dim=-1, eps=1e-12)
    a2p = a2 - (b1 * a2).sum(-1, keepdim=True) * b1
    b2 = torch.nn.functional.normalize(a2p, dim=-1, eps=1e-12)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def geodesic_angle(r1: torch.Tensor, r2: torch.Tensor) -> torch.Tensor:
    """Rotation angle between matrices via the chord identity ‖R1-R2‖F = 2√2 sin(θ/2).

    Exactly zero on identical inputs; asin keeps gradients bounded near zero.
    """
    fro = torch.sqrt(((r1 - r2) ** 2).sum(dim=(-2, -1)))
    ratio = torch.clamp(fro / (2.0 * np.sqrt(2.0)), max=1.0 - 1e-7)
    return 2.0 * torch.asin(ratio)


def policy_loss(raw: torch.Tensor, target: torch.Tensor, config: PolicyConfig) -> torch.Tensor:
    """MSE on translations (mean per dim) + λ_rot · mean geodesic angle."""
    arms = config.arms
    t_pred = raw[:, : 3 * arms].reshape(-1, arms, 3)
    mse = ((t_pred - target[..., :3]) ** 2).mean()
    if config.translation_only:
        return mse
    r_pred = rot6d_to_matrix(raw[:, 3 * arms :].reshape(-1, arms, 6))
    r_tgt = rot6d_to_matrix(target[..., 3:])
    return mse + config.lambda_rot * geodesic_angle(r_pred, r_tgt).mean()


def learning_rate(epoch: int, base: float = 1e-3, decay: float = 0.1, every: int = 50) -> float:
    """Step schedule: base · decay^⌊epoch/every⌋."""
    return base * decay ** (epoch // every)


class PyramidStore:
    """Stacked per-sample pyramids with cheap minibatch slicing."""

    def __init__(self, clouds: list[np.ndarray], with_fp: bool = False):
        pyrs = [build_pyramid(c, with_fp) for c in clouds]
        self._batch_all = PyramidBatch(pyrs)
        self.with_fp = with_fp

    def batch(self, idx: torch.Tensor) -> PyramidBatch:
        sel = object.__new__(PyramidBatch)
        sel.xyz = [t[idx] for t in self._batch_all.xyz]
        sel.knn = [t[idx] for t in self._batch_all.knn]
        sel.inv_density = [t[idx] for t in self._batch_all.inv_density]
        if self.with_fp:
            sel.fp_idx = [t[idx] for t in self._batch_all.fp_idx]
            sel.fp_w = [t[idx] for t in self._batch_all.fp_w]
        return sel


@dataclass
class TrainResult:
    model: "PolicyNet"
    loss_curve: list[float] = field(default_factory=list)


def train_policy(
    samples,
    config: PolicyConfig,
    epochs: int = 150,
    batch_size: int = 64,
    rng_seed: int = 0,
    base_lr: float = 1e-3,
) -> TrainResult:
    """Supervised training with the step-decay schedule; deterministic per seed."""
    if not samples:
        raise ConfigurationError("empty training set")
    torch.manual_seed(rng_seed)
    model = PolicyNet(config)

    cur = torch.as_tensor(
        np.stack([s.current[: config.current_channels].T for s in samples]), dtype=torch.float32
    )
    goal = torch.as_tensor(np.stack([s.goal[:3].T for s in samples]), dtype=torch.float32)
    target = torch.as_tensor(np.stack([s.target for s in samples]), dtype=torch.float32)
    cur_store = PyramidStore([s.current[:3].T for s in samples])
    goal_store = PyramidStore([s.goal[:3].T for s in samples])

    optimizer = torch.optim.Adam(model.parameters(), lr=base_lr)
    rng = np.random.default_rng(rng_seed)
    n = len(samples)
    curve = []
    for epoch in range(epochs):
        lr = learning_rate(epoch, base_lr)
        for group in optimizer.param_groups:
            group["lr"] = lr
        perm = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, batch_size):
            idx = torch.as_tensor(perm[start : start + batch_size])
            raw = model(cur[idx], cur_store.batch(idx), goal[idx], goal_store.batch(idx))
            loss = policy_loss(raw, target[idx], config)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        epoch_loss = total / seen
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        curve.append(epoch_loss)
    return TrainResult(model, curve)


def evaluate_loss(model: PolicyNet, samples, batch_size: int = 64) -> float:
    """Mean policy loss over a sample list (no gradient)."""
    config = model.config
    cur = torch.as_tensor(
        np.stack([s.current[: config.current_channels].T for s in samples]), dtype=torch.float32
    )
    goal = torch.as_tensor(np.stack([s.goal[:3].T for s in samples]), dtype=torch.float32)
    target = torch.as_tensor(np.stack([s.target for s in samples]), dtype=torch.float32)
    cur_store = PyramidStore([s.current[:3].T for s in samples])
    goal_store = PyramidStore([s.goal[:3].T for s in samples])
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            idx = torch.arange(start, min(start + batch_size, len(samples)))
            raw = model(cur[idx], cur_store.batch(idx), goal[idx], goal_store.batch(idx))
            total += float(policy_loss(raw, target[idx], config)) * len(idx)
    return total / len(samples)


def infer_action(model: PolicyNet, current: np.ndarray, goal: np.ndarray) -> list[RigidTransform]:
    """Decode one action per arm from a single observation pair.

    ``current`` is (3+arms, N) object-frame matrix (mask rows optional when the
    model was trained without them), ``goal`` is (3, N). A degenerate predicted
    6D block decodes to the identity rotation with a warning.
    """
    config = model.config
    if current.shape[0] < config.current_channels:
        raise ConfigurationError(
            f"current cloud has {current.shape[0]} channels, model expects {config.current_channels}"
        )
    if current.shape[1] != config.n_points or goal.shape[1] != config.n_points:
        raise ConfigurationError("cloud size does not match model n_points")
    cur_feats = torch.as_tensor(current[: config.current_channels].T[None], dtype=torch.float32)
    goal_feats = torch.as_tensor(goal[:3].T[None], dtype=torch.float32)
    cur_pyr = PyramidBatch([build_pyramid(current[:3].T)])
    goal_pyr = PyramidBatch([build_pyramid(goal[:3].T)])
    with torch.no_grad():
        raw = model(cur_feats, cur_pyr, goal_feats, goal_pyr)[0].numpy().astype(np.float64)
    actions = []
    for arm in range(config.arms):
        t = raw[3 * arm : 3 * arm + 3]
        if config.translation_only:
            rot = np.eye(3)
        else:
            block = raw[3 * config.arms + 6 * arm : 3 * config.arms + 6 * arm + 6]
            try:
                rot = rot6d_decode(block)
            except DegenerateRotationError:
                warnings.warn("degenerate 6D rotation block; using identity rotation")
                rot = np.eye(3)
        actions.append(RigidTransform(rot, t, validate=False))
    return actions
