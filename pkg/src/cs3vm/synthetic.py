"""Generators for small random instances and for a linearly separable benchmark family."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, Instance


def random_instance(seed: int, max_dim: int = 3, max_labeled: int = 8, max_unlabeled: int = 10,
                    min_unlabeled: int = 1, noise: float = 0.15) -> Instance:
    """Gaussian points labeled by a random hyperplane, with a share of labels flipped.

    Every labeled block contains at least one point; tau is the true positive
    count among the unlabeled points.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_labeled + 1))
    m = int(rng.integers(min_unlabeled, max_unlabeled + 1))
    x = rng.normal(size=(n + m, d)) * rng.uniform(0.5, 3.0)
    w = rng.normal(size=d)
    b = rng.normal() * 0.5
    y = np.where(x @ w + b >= 0, 1, -1)
    flip = rng.random(n + m) < noise
    y[flip] *= -1
    return Instance.build(x[:n], y[:n], x[n:], int(np.sum(y[n:] == 1)), y[n:], name=f"random-{seed}")


def separable_dataset(seed: int, n_points: int = 200, dim: int = 2, margin: float = 0.05,
                      positive_share: float = 0.5) -> Dataset:
    """Uniform points in [-1, 1]^dim split by a hyperplane, with a gap of ``margin`` around it.

    The offset is chosen so that roughly ``positive_share`` of the points are
    positive.
    """
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    probe = rng.uniform(-1, 1, size=(4096, dim)) @ w
    b = -float(np.quantile(probe, 1.0 - positive_share))
    pts = []
    while len(pts) < n_points:
        cand = rng.uniform(-1, 1, size=(n_points, dim))
        keep = np.abs(cand @ w + b) >= margin
        pts.extend(cand[keep])
    x = np.asarray(pts[:n_points])
    y = np.where(x @ w + b > 0, 1, -1)
    return Dataset(x, y, f"separable-{seed}")
