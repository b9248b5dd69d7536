"""Data ingestion, preprocessing, rescaling and labeled/unlabeled sampling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MISSING_TOKENS = frozenset({"", "NA"})
BOUND = 100.0


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class RawDataset:
    features: np.ndarray  # N x d, NaN marks a missing cell
    labels: np.ndarray  # N, NaN marks a missing label
    name: str
    columns: tuple[str, ...] = ()

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray  # N x d
    labels: np.ndarray  # N, values in {-1, +1}
    name: str

    def __post_init__(self):
        if self.points.ndim != 2 or self.labels.shape != (self.points.shape[0],):
            raise DatasetError("points must be N x d and labels must have length N")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise DatasetError("labels must be -1 or +1")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "labels": [int(v) for v in self.labels], "name": self.name}

    @classmethod
    def from_dict(cls, data: dict) -> "Dataset":
        points = np.asarray(data["points"], dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1) if points.size else np.zeros((0, 1))
        return cls(points, np.asarray(data["labels"], dtype=int), data["name"])


@dataclass(frozen=True)
class Sample:
    labeled_idx: tuple[int, ...]
    unlabeled_idx: tuple[int, ...]
    labels: tuple[int, ...]  # labels of labeled_idx, in the same order
    tau: int
    seed: int
    kind: str  # "biased" or "srs"

    @property
    def n(self) -> int:
        return len(self.labeled_idx)

    @property
    def m(self) -> int:
        return len(self.unlabeled_idx)

    def to_dict(self) -> dict:
        return {
            "labeled_idx": list(self.labeled_idx),
            "unlabeled_idx": list(self.unlabeled_idx),
            "labels": list(self.labels),
            "tau": self.tau,
            "seed": self.seed,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Sample":
        return cls(tuple(int(i) for i in data["labeled_idx"]), tuple(int(i) for i in data["unlabeled_idx"]),
                   tuple(int(v) for v in data["labels"]), int(data["tau"]), int(data["seed"]), str(data["kind"]))

    def validate(self, ds: Dataset) -> None:
        lab, unl = set(self.labeled_idx), set(self.unlabeled_idx)
        if lab & unl or lab | unl != set(range(ds.n_points)) or len(lab) != self.n or len(unl) != self.m:
            raise DatasetError("labeled and unlabeled indices must partition the points")
        if tuple(int(ds.labels[i]) for i in self.labeled_idx) != self.labels:
            raise DatasetError("sample labels disagree with the dataset")
        if self.tau != int(np.sum(ds.labels[list(self.unlabeled_idx)] == 1)):
            raise DatasetError("tau must equal the positive count among unlabeled points")


@dataclass(frozen=True)
class Instance:
    """Numerical view of a sample: the arrays every optimization model consumes."""

    x_lab: np.ndarray  # n x d
    y_lab: np.ndarray  # n, +-1
    x_unl: np.ndarray  # m x d
    tau: int
    y_unl: np.ndarray | None = None  # ground truth, evaluation only
    name: str = ""
    max_norm: float = field(init=False)

    def __post_init__(self):
        if self.x_lab.ndim != 2 or self.x_unl.ndim != 2 or self.x_lab.shape[1] != self.x_unl.shape[1]:
            raise DatasetError("labeled and unlabeled blocks must be 2-D with equal width")
        if self.y_lab.shape != (self.x_lab.shape[0],):
            raise DatasetError("one label per labeled point is required")
        if not 0 <= self.tau <= self.x_unl.shape[0]:
            raise DatasetError("tau must lie in [0, m]")
        norms = np.linalg.norm(np.vstack([self.x_lab, self.x_unl]), axis=1)
        object.__setattr__(self, "max_norm", float(norms.max(initial=0.0)))

    @classmethod
    def build(cls, x_lab, y_lab, x_unl, tau: int, y_unl=None, name: str = "") -> "Instance":
        x_lab = np.atleast_2d(np.asarray(x_lab, dtype=float))
        x_unl = np.asarray(x_unl, dtype=float)
        if x_unl.ndim == 1:
            x_unl = x_unl.reshape(-1, x_lab.shape[1]) if x_unl.size else np.zeros((0, x_lab.shape[1]))
        y_unl = None if y_unl is None else np.asarray(y_unl, dtype=int)
        return cls(x_lab, np.asarray(y_lab, dtype=int), x_unl, int(tau), y_unl, name)

    @classmethod
    def from_sample(cls, ds: Dataset, sample: Sample) -> "Instance":
        lab = list(sample.labeled_idx)
        unl = list(sample.unlabeled_idx)
        return cls(ds.points[lab], ds.labels[lab].astype(int), ds.points[unl].reshape(len(unl), ds.dim),
                   sample.tau, ds.labels[unl].astype(int), ds.name)

    @property
    def n(self) -> int:
        return self.x_lab.shape[0]

    @property
    def m(self) -> int:
        return self.x_unl.shape[0]

    @property
    def dim(self) -> int:
        return self.x_lab.shape[1]

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.y_lab == -1))

    def all_points(self) -> np.ndarray:
        return np.vstack([self.x_lab, self.x_unl])


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text in MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None


def load_csv(path: str | Path, label_column: str = "target") -> RawDataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: no rows")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not found")
        label_pos = header.index(label_column)
        feature_cols = [c for i, c in enumerate(header) if i != label_pos]
        feats, labels = [], []
        for line_no, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DatasetError(f"row {line_no}: expected {len(header)} cells, found {len(cells)}")
            values = [_parse_cell(c, line_no, header[i]) for i, c in enumerate(cells)]
            label = values[label_pos]
            if not math.isnan(label) and label != int(label):
                raise DatasetError(f"row {line_no}, column {label_column!r}: class label must be an integer")
            labels.append(label)
            feats.append([v for i, v in enumerate(values) if i != label_pos])
    if not feats:
        raise DatasetError(f"{path}: no rows")
    return RawDataset(np.asarray(feats, dtype=float).reshape(len(feats), len(feature_cols)),
                      np.asarray(labels, dtype=float), path.stem, tuple(feature_cols))


def preprocess(raw: RawDataset, positive_label: int = 1) -> Dataset:
    """Drop incomplete and repeated rows and map the class labels to +-1.

    With three classes the class ``positive_label`` is positive and the other
    two are merged into the negative class.
    """
    if len(raw) == 0:
        raise DatasetError("empty dataset")
    complete = ~np.isnan(raw.features).any(axis=1) & ~np.isnan(raw.labels)
    feats = raw.features[complete]
    labels = raw.labels[complete]
    if feats.shape[0] == 0:
        raise DatasetError("every row has missing values")
    classes = np.unique(labels)
    if classes.size > 3:
        raise DatasetError(f"expected at most 3 classes, found {classes.size}")
    seen: set[bytes] = set()
    keep = []
    for i in range(feats.shape[0]):
        key = np.ascontiguousarray(feats[i]).tobytes() + np.float64(labels[i]).tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    feats, labels = feats[keep], labels[keep]
    y = np.where(labels == positive_label, 1, -1)
    return Dataset(feats, y, raw.name)


def rescale(ds: Dataset) -> Dataset:
    """Center every coordinate on its midrange; squash wide coordinates onto [-100, 100]."""
    x = ds.points.astype(float).copy()
    if x.shape[0] == 0:
        return ds
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    mid = 0.5 * (lo + hi)
    x -= mid
    lo_s, hi_s = lo - mid, hi - mid
    for j in range(x.shape[1]):
        if hi[j] == lo[j]:
            x[:, j] = 0.0
        elif lo_s[j] < -BOUND or hi_s[j] > BOUND:
            x[:, j] = 2.0 * BOUND * (x[:, j] - lo_s[j]) / (hi_s[j] - lo_s[j]) - BOUND
    return Dataset(x, ds.labels.copy(), ds.name)


def labeled_count(n_points: int, fraction: float) -> int:
    if not 0.0 < fraction < 1.0:
        raise DatasetError("fraction must lie in (0, 1)")
    # the product is rounded to 12 digits first so 0.1 * 200 is 20, not 21
    n = math.ceil(round(fraction * n_points, 12))
    if n <= 0 or n >= n_points:
        raise DatasetError(f"fraction {fraction} gives {n} labeled points out of {n_points}")
    return n


def _finish_sample(ds: Dataset, chosen: list[int], seed: int, kind: str) -> Sample:
    chosen_set = set(chosen)
    unlabeled = tuple(i for i in range(ds.n_points) if i not in chosen_set)
    labeled = tuple(sorted(chosen))
    tau = int(np.sum(ds.labels[list(unlabeled)] == 1))
    return Sample(labeled, unlabeled, tuple(int(ds.labels[i]) for i in labeled), tau, seed, kind)


def draw_biased_sample(ds: Dataset, fraction: float, p_pos: float, seed: int) -> Sample:
    """Label points one at a time, preferring the positive class with probability ``p_pos``."""
    if not 0.0 <= p_pos <= 1.0:
        raise DatasetError("p_pos must lie in [0, 1]")
    pos = [int(i) for i in np.flatnonzero(ds.labels == 1)]
    neg = [int(i) for i in np.flatnonzero(ds.labels == -1)]
    if not pos or not neg:
        raise DatasetError("biased sampling needs points of both classes")
    n = labeled_count(ds.n_points, fraction)
    rng = np.random.default_rng(seed)
    chosen = []
    for _ in range(n):
        want_pos = rng.random() < p_pos
        pool = pos if (want_pos and pos) or not neg else neg
        chosen.append(pool.pop(int(rng.integers(len(pool)))))
    return _finish_sample(ds, chosen, seed, "biased")


def draw_srs_sample(ds: Dataset, fraction: float, seed: int) -> Sample:
    n = labeled_count(ds.n_points, fraction)
    rng = np.random.default_rng(seed)
    chosen = [int(i) for i in rng.choice(ds.n_points, size=n, replace=False)]
    return _finish_sample(ds, chosen, seed, "srs")


def save_json(obj: Dataset | Sample, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_dataset_json(path: str | Path) -> Dataset:
    return Dataset.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_sample_json(path: str | Path) -> Sample:
    return Sample.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
