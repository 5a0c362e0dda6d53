"""Discrete Fréchet distance between polygonal curves."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


def discrete_frechet(curve_a, curve_b) -> float:
    """Discrete Fréchet distance via the standard dynamic program.

    Inputs are point sequences of shape (n, d). Symmetric, and bounded below
    by the distances of the forced endpoint pairings.
    """
    a = np.asarray(curve_a, dtype=np.float64)
    b = np.asarray(curve_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise InvalidInputError("curves must be non-empty (n, d) point sequences")
    n, m = a.shape[0], b.shape[0]
    dist = np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2))
    ca = np.empty((n, m))
    ca[0, 0] = dist[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], dist[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], dist[i, 0])
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), dist[i, j])
    return float(ca[n - 1, m - 1])
