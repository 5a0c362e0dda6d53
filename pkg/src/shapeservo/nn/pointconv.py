"""Density-weighted point convolutions over precomputed cloud pyramids.

The hierarchy (FPS levels, kNN neighborhoods, kernel-density weights, and
feature-propagation interpolation) depends only on point coordinates, so it
is computed once per sample in numpy and reused across training steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ConfigurationError
from ..geometry import furthest_point_sample_indices

K_NEIGHBORS = 16
WEIGHT_HIDDEN = 8
WEIGHT_OUT = 8
GROUPS = 8
STAGE_CHANNELS = (64, 128, 256)


def _knn(query: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    d = np.sum((query[:, None, :] - points[None, :, :]) ** 2, axis=2)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def _inverse_density(points: np.ndarray, k: int) -> np.ndarray:
    """1 / Gaussian-KDE density over each point's k-neighborhood radii."""
    k = min(k, points.shape[0])
    d = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    nn_d = np.sort(d, axis=1)[:, 1 : k + 1]
    sigma2 = max(float(nn_d.mean()), 1e-12)
    density = np.exp(-nn_d / (2.0 * sigma2)).mean(axis=1) + 1e-9
    inv = 1.0 / density
    return inv / inv.mean()


@dataclass
class CloudPyramid:
    """Per-sample hierarchy tensors (level 0 = input cloud)."""

    xyz: list[np.ndarray]  # (N_l, 3) per level, plus the global centroid level
    knn: list[np.ndarray]  # (N_{l+1}, k) neighbor indices into level l
    inv_density: list[np.ndarray]  # (N_l,) per level consumed by stage l+1
    fp_idx: list[np.ndarray] | None = None  # upsampling 3-NN indices per level pair
    fp_w: list[np.ndarray] | None = None


def build_pyramid(points: np.ndarray, with_fp: bool = False) -> CloudPyramid:
    """FPS/kNN/density hierarchy: N -> N/2 -> N/4 -> 1 (global)."""
    n = points.shape[0]
    if n % 4 != 0:
        raise ConfigurationError(f"n_points must be divisible by 4, got {n}")
    xyz0 = np.asarray(points, dtype=np.float64)
    idx1 = furthest_point_sample_indices(xyz0, n // 2)
    xyz1 = xyz0[idx1]
    idx2 = furthest_point_sample_indices(xyz1, n // 4)
    xyz2 = xyz1[idx2]
    centroid = xyz2.mean(axis=0, keepdims=True)

    k = K_NEIGHBORS
    pyr = CloudPyramid(
        xyz=[xyz0, xyz1, xyz2, centroid],
        knn=[_knn(xyz1, xyz0, k), _knn(xyz2, xyz1, k), np.arange(n // 4)[None, :]],
        inv_density=[_inverse_density(xyz0, k), _inverse_density(xyz1, k), _inverse_density(xyz2, k)],
    )
    if with_fp:
        pyr.fp_idx, pyr.fp_w = [], []
        for hi, lo in ((xyz1, xyz2), (xyz0, xyz1)):
            idx = _knn(hi, lo, 3)
            d = np.linalg.norm(hi[:, None, :] - lo[idx], axis=2)
            w = 1.0 / (d + 1e-8)
            pyr.fp_idx.append(idx)
            pyr.fp_w.append(w / w.sum(axis=1, keepdims=True))
    return pyr


class PyramidBatch:
    """Stacked pyramid tensors for one minibatch."""

    def __init__(self, pyramids: list[CloudPyramid], device="cpu", dtype=torch.float32):
        self.xyz = [
            torch.as_tensor(np.stack([p.xyz[l] for p in pyramids]), dtype=dtype, device=device)
            for l in range(4)
        ]
        self.knn = [
            torch.as_tensor(np.stack([p.knn[l] for p in pyramids]), dtype=torch.long, device=device)
            for l in range(3)
        ]
        self.inv_density = [
            torch.as_tensor(np.stack([p.inv_density[l] for p in pyramids]), dtype=dtype, device=device)
            for l in range(3)
        ]
        if pyramids[0].fp_idx is not None:
            self.fp_idx = [
                torch.as_tensor(np.stack([p.fp_idx[l] for p in pyramids]), dtype=torch.long, device=device)
                for l in range(2)
            ]
            self.fp_w = [
                torch.as_tensor(np.stack([p.fp_w[l] for p in pyramids]), dtype=dtype, device=device)
                for l in range(2)
            ]


def gather_points(values: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """values (B, N, C), idx (B, S, K) -> (B, S, K, C)."""
    b, n, c = values.shape
    _, s, k = idx.shape
    flat = idx.reshape(b, s * k, 1).expand(-1, -1, c)
    return values.gather(1, flat).reshape(b, s, k, c)


class PointConvLayer(nn.Module):
    """One density-weighted convolution stage over precomputed neighborhoods."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.weight_net = nn.Sequential(
            nn.Linear(3, WEIGHT_HIDDEN), nn.ReLU(), nn.Linear(WEIGHT_HIDDEN, WEIGHT_OUT)
        )
        self.linear = nn.Linear((in_channels + 3) * WEIGHT_OUT, out_channels)
        self.norm = nn.GroupNorm(GROUPS, out_channels)

    def forward(self, xyz_prev, feats_prev, xyz_new, knn_idx, inv_density):
        # rel coords and gathered features per neighborhood
        neigh_xyz = gather_points(xyz_prev, knn_idx)
        rel = neigh_xyz - xyz_new.unsqueeze(2)
        parts = [rel]
        if feats_prev is not None:
            parts.append(gather_points(feats_prev, knn_idx))
        feats = torch.cat(parts, dim=-1)  # (B, S, K, C+3)
        b, s, k = knn_idx.shape
        den = inv_density.gather(1, knn_idx.reshape(b, s * k)).reshape(b, s, k)
        feats = feats * den.unsqueeze(-1)
        weights = self.weight_net(rel)  # (B, S, K, W)
        agg = torch.einsum("bskc,bskw->bscw", feats, weights).flatten(2)
        out = self.linear(agg)  # (B, S, C_out)
        out = self.norm(out.transpose(1, 2)).transpose(1, 2)
        return torch.relu(out)


class FeatureExtractor(nn.Module):
    """Three-stage hierarchy producing one global shape-feature vector."""

    def __init__(self, in_channels: int):
        super().__init__()
        c1, c2, c3 = STAGE_CHANNELS
        self.stage1 = PointConvLayer(in_channels, c1)
        self.stage2 = PointConvLayer(c1, c2)
        self.stage3 = PointConvLayer(c2, c3)

    def forward(self, feats, pyr: PyramidBatch, return_stages: bool = False):
        f1 = self.stage1(pyr.xyz[0], feats, pyr.xyz[1], pyr.knn[0], pyr.inv_density[0])
        f2 = self.stage2(pyr.xyz[1], f1, pyr.xyz[2], pyr.knn[1], pyr.inv_density[1])
        f3 = self.stage3(pyr.xyz[2], f2, pyr.xyz[3], pyr.knn[2], pyr.inv_density[2])
        global_feat = f3.squeeze(1)  # (B, 256)
        if return_stages:
            return global_feat, (f1, f2)
        return global_feat


class FeaturePropagation(nn.Module):
    """Inverse-distance 3-NN upsampling followed by a pointwise MLP."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_channels + skip_channels, out_channels),
            nn.ReLU(),
            nn.Linear(out_channels, out_channels),
        )
        self.norm = nn.GroupNorm(GROUPS, out_channels)

    def forward(self, feats_lo, feats_skip, fp_idx, fp_w):
        if fp_idx is None:
            up = feats_lo.expand(-1, feats_skip.shape[1], -1)
        else:
            neigh = gather_points(feats_lo, fp_idx)
            up = (neigh * fp_w.unsqueeze(-1)).sum(dim=2)
        out = self.mlp(torch.cat([up, feats_skip], dim=-1))
        out = self.norm(out.transpose(1, 2)).transpose(1, 2)
        return torch.relu(out)
