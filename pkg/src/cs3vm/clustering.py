"""k-means over the unlabeled points, cut detection and splitting, the distance quantile."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import Hyperplane


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Clustering:
    """A partition of (a subset of) the unlabeled points.

    ``members[j]`` holds the unlabeled indices of cluster ``j``; centroids are
    their arithmetic means.
    """

    members: tuple[np.ndarray, ...]
    centroids: np.ndarray

    @classmethod
    def from_members(cls, points: np.ndarray, members: Sequence[Sequence[int]]) -> "Clustering":
        groups = tuple(np.asarray(sorted(int(i) for i in g), dtype=int) for g in members)
        if any(g.size == 0 for g in groups):
            raise ClusteringError("clusters must be nonempty")
        d = points.shape[1]
        cents = np.array([points[g].mean(axis=0) for g in groups]).reshape(len(groups), d)
        return cls(groups, cents)

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def counts(self) -> np.ndarray:
        return np.array([g.size for g in self.members], dtype=int)

    def membership(self, m: int) -> np.ndarray:
        """Cluster id of every unlabeled index (-1 for indices not covered)."""
        out = np.full(m, -1, dtype=int)
        for j, g in enumerate(self.members):
            out[g] = j
        return out


def kmeans_loss(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


@dataclass
class KMeansResult:
    clustering: Clustering
    loss_history: list[float] = field(default_factory=list)
    iterations: int = 0


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each new centre is drawn with probability proportional to D^2."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every remaining point coincides with a centre; fall back to unused indices
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(unused[0])
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].astype(float)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    dist = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(dist, axis=1)


def _repair_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        donors = sizes[labels] > 1
        dist = np.sum((points - centroids[labels]) ** 2, axis=1)
        dist[~donors] = -1.0
        labels[int(np.argmax(dist))] = j
    return labels


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm; cluster members are row indices of ``points``."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k <= 0:
        raise ClusteringError("k must be positive")
    if k > n:
        raise ClusteringError(f"k={k} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(points, k, rng)
    labels = _repair_empty(points, _assign(points, centroids), centroids, k)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        centroids = np.array([points[labels == j].mean(axis=0) for j in range(k)])
        history.append(kmeans_loss(points, labels, centroids))
        new = _repair_empty(points, _assign(points, centroids), centroids, k)
        if np.array_equal(new, labels):
            break
        labels = new
    members = [np.flatnonzero(labels == j) for j in range(k)]
    return KMeansResult(Clustering.from_members(points, members), history, it)


def nonnegative_side(scores: np.ndarray, h: Hyperplane) -> np.ndarray:
    """Boundary points count as the nonnegative side."""
    return scores >= -h.band


def is_cut(points: np.ndarray, h: Hyperplane) -> bool:
    if len(points) == 0:
        return False
    nonneg = nonnegative_side(h.score(points), h)
    return bool(nonneg.any() and not nonneg.all())


def split_cut_clusters(c: Clustering, points: np.ndarray, h: Hyperplane,
                       only: Sequence[int] | None = None) -> tuple[Clustering, list[tuple[int, int]]]:
    """Replace every cut cluster by its two halves.

    The nonnegative half keeps the cluster's position, the negative half is
    appended.  Returns the new clustering and the (kept, appended) position
    pairs.  ``only`` restricts the check to the given positions.
    """
    groups = [g for g in c.members]
    pairs = []
    check = range(c.k) if only is None else only
    for j in check:
        g = c.members[j]
        nonneg = nonnegative_side(h.score(points[g]), h)
        if nonneg.any() and not nonneg.all():
            groups[j] = g[nonneg]
            groups.append(g[~nonneg])
            pairs.append((j, len(groups) - 1))
    if not pairs:
        return c, []
    return Clustering.from_members(points, groups), pairs


def quantile(values: Sequence[float], a: float) -> float:
    """Quantile by linear interpolation between order statistics.

    With sorted values s_1..s_d, q is the last position whose rank fraction
    (i-1)/(d-1) is at most ``a`` and r the first one at least ``a``.
    """
    s = np.sort(np.asarray(values, dtype=float))
    d = s.size
    if d == 0:
        raise ClusteringError("quantile of an empty set")
    if not 0.0 <= a <= 1.0:
        raise ClusteringError("quantile level must lie in [0, 1]")
    if d == 1:
        return float(s[0])
    frac = np.arange(d) / (d - 1)
    q = int(np.flatnonzero(frac <= a).max()) + 1
    r = int(np.flatnonzero(frac >= a).min()) + 1
    sq, sr = s[q - 1], s[r - 1]
    if q == r:
        return float(sq)
    return float(sq + (sq - sr) / (q - r) * ((d - 1) * a - q + 1))


def compute_delta(h: Hyperplane, centroids: np.ndarray, delta_hat: float) -> float:
    """Discard threshold: the ``delta_hat`` quantile of |omega'c_j + b| over the given centroids."""
    return quantile(np.abs(h.score(np.atleast_2d(centroids))), delta_hat)
