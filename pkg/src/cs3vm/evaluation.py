"""Classification, confusion matrices, metrics, ratios, gaps and ECDF curves.

A metric whose denominator is zero is *undefined* and represented by
``None`` (``null`` in JSON).  Undefined values are never replaced by 0 or 1
and are dropped from aggregates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import Instance
from .models import Hyperplane, solve_svm

METHODS = ("svm", "cs3vm", "rcm", "ircm", "wircm")
CLUSTER_METHODS = ("rcm", "ircm")


class EvaluationError(ValueError):
    pass


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def classify(h: Hyperplane, inst: Instance, method: str, z: Sequence[float] | None = None,
             cluster_z: Sequence[float] | None = None, owner: Sequence[int] | None = None) -> np.ndarray:
    """Predicted labels of all points, labeled block first, then unlabeled.

    Off the hyperplane the sign decides.  On it, labeled points (and every
    point under ``svm``) get their true label, unlabeled points get their z
    (``cs3vm``, ``wircm``) or the z of the cluster that carried them (``rcm``,
    ``ircm``).
    """
    if method not in METHODS:
        raise EvaluationError(f"unknown method {method!r}")
    if inst.y_unl is None:
        raise EvaluationError("classification needs the true labels of the unlabeled points")
    pred_lab = h.side(inst.x_lab)
    pred_lab = np.where(pred_lab == 0, inst.y_lab, pred_lab)
    side = h.side(inst.x_unl)
    on_plane = side == 0
    if method == "svm":
        fill = inst.y_unl
    elif method in CLUSTER_METHODS:
        if cluster_z is None or owner is None:
            raise EvaluationError(f"method {method!r} needs the cluster decisions and the membership")
        fill = np.where(np.round(np.asarray(cluster_z, dtype=float))[np.asarray(owner, dtype=int)] > 0.5, 1, -1)
    else:
        if z is None or len(z) != inst.m:
            raise EvaluationError(f"method {method!r} needs one z per unlabeled point")
        fill = np.where(np.asarray(z, dtype=float) > 0.5, 1, -1)
    pred_unl = np.where(on_plane, fill, side)
    return np.concatenate([pred_lab, pred_unl]).astype(int)


@dataclass(frozen=True)
class ConfusionMatrix:
    TP: int
    TN: int
    FP: int
    FN: int

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN


@dataclass(frozen=True)
class MetricSet:
    AC: float | None
    PR: float | None
    RE: float | None
    FPR: float | None


def confusion(pred: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise EvaluationError(f"{pred.size} predictions for {truth.size} labels")
    return ConfusionMatrix(int(np.sum((pred == 1) & (truth == 1))), int(np.sum((pred == -1) & (truth == -1))),
                           int(np.sum((pred == 1) & (truth == -1))), int(np.sum((pred == -1) & (truth == 1))))


def metrics(cm: ConfusionMatrix) -> MetricSet:
    return MetricSet(_ratio(cm.TP + cm.TN, cm.total), _ratio(cm.TP, cm.TP + cm.FP), _ratio(cm.TP, cm.TP + cm.FN),
                     _ratio(cm.FP, cm.TN + cm.FP))


def _div(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return _ratio(a, b)


def ratios_vs_true(m: MetricSet, m_true: MetricSet) -> MetricSet:
    """Componentwise metric / metric of the true hyperplane."""
    return MetricSet(_div(m.AC, m_true.AC), _div(m.PR, m_true.PR), _div(m.RE, m_true.RE), _div(m.FPR, m_true.FPR))


def deltas_vs_svm(m: MetricSet, m_svm: MetricSet) -> tuple[float | None, float | None]:
    """Relative change of accuracy and precision against the labeled-only SVM."""
    out = []
    for a, b in ((m.AC, m_svm.AC), (m.PR, m_svm.PR)):
        out.append(None if a is None or b is None or b == 0 else (a - b) / b)
    return out[0], out[1]


def gap(bound: float, optimum: float) -> float | None:
    return None if optimum == 0 else (bound - optimum) / optimum


def ecdf(values: Sequence[float | None], censor_limit: float, grid: Sequence[float]) -> list[tuple[float, float]]:
    """Share of values that are at most sigma, for each sigma in ``grid``.

    Values above ``censor_limit`` (and ``None``) count as unsolved and are
    never counted.
    """
    if len(values) == 0:
        raise EvaluationError("ECDF of an empty set")
    solved = np.array([v for v in values if v is not None and v <= censor_limit], dtype=float)
    total = len(values)
    return [(float(s), int(np.sum(solved <= s)) / total) for s in grid]


def true_hyperplane(inst: Instance, C1: float = 1.0) -> Hyperplane:
    """SVM trained on every point with its true label."""
    if inst.y_unl is None:
        raise EvaluationError("the true hyperplane needs all labels")
    full = Instance.build(inst.all_points(), np.concatenate([inst.y_lab, inst.y_unl]), np.zeros((0, inst.dim)), 0)
    return solve_svm(full, C1).hyperplane


def truth_vector(inst: Instance) -> np.ndarray:
    return np.concatenate([inst.y_lab, inst.y_unl]).astype(int)


@dataclass
class BenchmarkRecord:
    instance_id: str
    method: str
    wall_time: float
    objective: float | None
    status: str
    metrics_all: MetricSet | None = None
    metrics_unlabeled: MetricSet | None = None
    ratios_true: MetricSet | None = None
    deltas_svm: tuple[float | None, float | None] | None = None
    gap: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BenchmarkRecord":
        def ms(v):
            return None if v is None else MetricSet(**v)
        deltas = d.get("deltas_svm")
        return cls(d["instance_id"], d["method"], float(d["wall_time"]), d.get("objective"), d["status"],
                   ms(d.get("metrics_all")), ms(d.get("metrics_unlabeled")), ms(d.get("ratios_true")),
                   None if deltas is None else tuple(deltas), d.get("gap"), dict(d.get("extra", {})))

    def comparable(self) -> dict:
        """Everything except timing, for reproducibility checks."""
        d = self.to_dict()
        d.pop("wall_time")
        d["extra"] = {k: v for k, v in d["extra"].items() if "time" not in k}
        return d


def write_records_jsonl(records: Iterable[BenchmarkRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records_jsonl(path: str | Path) -> list[BenchmarkRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [BenchmarkRecord.from_dict(json.loads(line)) for line in lines if line.strip()]


def write_ecdf_csv(curves: Mapping[str, list[tuple[float, float]]], path: str | Path) -> None:
    methods = sorted(curves)
    grids = {tuple(s for s, _ in curves[k]) for k in methods}
    if len(grids) > 1:
        raise EvaluationError("all curves must share one grid")
    grid = grids.pop() if grids else ()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma", *methods])
        for i, s in enumerate(grid):
            w.writerow([repr(s), *(repr(curves[k][i][1]) for k in methods)])


def write_boxplot_csv(records: Iterable[BenchmarkRecord], path: str | Path) -> int:
    """One row per (instance, method, metric) with a defined value; returns the row count."""
    rows = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_id", "method", "metric", "value"])
        for r in records:
            values = {}
            if r.ratios_true is not None:
                values.update({f"{k}_hat": v for k, v in asdict(r.ratios_true).items()})
            if r.deltas_svm is not None:
                values["AC_bar"], values["PR_bar"] = r.deltas_svm
            if r.gap is not None:
                values["gap"] = r.gap
            for k, v in values.items():
                if v is not None:
                    w.writerow([r.instance_id, r.method, k, repr(float(v))])
                    rows += 1
    return rows
