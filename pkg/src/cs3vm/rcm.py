"""Re-clustering heuristics: RCM and its improved variant IRCM.

Both start from a k-means clustering of the unlabeled points, solve the
clustered problem, and split every cluster the resulting hyperplane cuts.
IRCM additionally parks clusters that lie far from the hyperplane (their
counts move to a *residual* cluster on the same side), brings them back when
they come close or change sides, and tightens the big-M from the upper bound
each iteration provides.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bb import BbError, BbOptions, BbStatus, solve_miqp
from .clustering import compute_delta, kmeans, nonnegative_side
from .dataset import Instance
from .models import (FeasiblePoint, Hyperplane, PenaltyConfig, big_m_initial, big_m_update, build_clustered,
                     lift_svm_solution, point_from_assignment)


class RcmError(ValueError):
    pass


def default_k1(m: int) -> int:
    if m <= 500:
        return 10
    if m <= 1000:
        return 20
    return 50


@dataclass(frozen=True)
class RcmConfig:
    k1: int = 10
    k_plus: int = 50
    delta_hat_1: float = 0.8
    delta_tilde: float = 0.1
    penalties: PenaltyConfig = PenaltyConfig()
    tau: int | None = None  # defaults to the instance's tau
    time_limit: float = 3600.0
    seed: int = 0
    kmeans_max_iter: int = 100

    def __post_init__(self):
        if self.k1 < 1:
            raise RcmError("k1 must be at least 1")
        if not 0.0 < self.delta_hat_1 < 1.0 or not 0.0 < self.delta_tilde < 1.0:
            raise RcmError("delta_hat_1 and delta_tilde must lie in (0, 1)")
        if not self.time_limit > 0:
            raise RcmError("time_limit must be positive")


@dataclass
class TraceRow:
    iteration: int
    k: int
    objective: float
    delta: float | None
    discarded: int
    reactivated_side_change: int
    big_m: float
    cut: int
    wall_time: float
    delta_hat: float | None = None
    max_abs_score: float = 0.0  # max |omega'x + b| over the unlabeled points
    next_M: float | None = None  # big-M handed to the following solve


    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RcmResult:
    point: FeasiblePoint  # clustered form: one z per active cluster at the final solve
    lifted: FeasiblePoint  # one z per unlabeled point
    iterations: int  # rounds that split or reactivated, i.e. the loop counter of the method
    solves: int
    final_k: int
    final_M: float
    hit_time_limit: bool
    owner: np.ndarray  # for each unlabeled point: position of the cluster that carried it
    centroids: np.ndarray
    weights: np.ndarray
    trace: list[TraceRow] = field(default_factory=list)
    lift_repairs: int = 0
    method: str = "rcm"

    @property
    def hyperplane(self) -> Hyperplane:
        return self.lifted.hyperplane

    @property
    def objective(self) -> float:
        return self.lifted.objective


class ClusterLedger:
    """Active and parked clusters with the counts parked clusters hand to residuals."""

    def __init__(self, points: np.ndarray, groups: list[np.ndarray]):
        self.points = points
        self.members: list[np.ndarray] = [np.asarray(g, dtype=int) for g in groups]
        self.active: list[int] = list(range(len(groups)))
        self.discarded: dict[int, int] = {}  # parked id -> residual id
        self.residual: dict[int, int | None] = {1: None, -1: None}

    # ---------------------------------------------------------------- views
    def centroid(self, j: int) -> np.ndarray:
        return self.points[self.members[j]].mean(axis=0)

    def centroids(self) -> np.ndarray:
        return np.array([self.centroid(j) for j in self.active]).reshape(len(self.active), self.points.shape[1])

    def absorbed(self, j: int) -> int:
        return sum(self.members[g].size for g, r in self.discarded.items() if r == j)

    def weights(self) -> np.ndarray:
        return np.array([self.members[j].size + self.absorbed(j) for j in self.active], dtype=float)

    def owner(self) -> np.ndarray:
        """Position (in the active list) of the cluster representing each unlabeled point."""
        pos = {j: p for p, j in enumerate(self.active)}
        out = np.full(self.points.shape[0], -1, dtype=int)
        for j in self.active:
            out[self.members[j]] = pos[j]
        for g, r in self.discarded.items():
            out[self.members[g]] = pos[r]
        return out

    def total(self) -> int:
        return int(self.weights().sum())

    def is_residual(self, j: int) -> bool:
        return any(r == j for r in self.discarded.values())

    # ---------------------------------------------------------------- updates
    def discard(self, j: int, residual: int) -> None:
        self.active.remove(j)
        self.discarded[j] = residual

    def reactivate(self, g: int) -> None:
        del self.discarded[g]
        self.active.append(g)
        self.active.sort()

    def split(self, h: Hyperplane) -> int:
        """Split every active cluster cut by ``h``; returns how many were split."""
        count = 0
        for j in list(self.active):
            g = self.members[j]
            nonneg = nonnegative_side(h.score(self.points[g]), h)
            if nonneg.all() or not nonneg.any():
                continue
            self.members[j] = g[nonneg]
            self.members.append(g[~nonneg])
            new = len(self.members) - 1
            self.active.append(new)
            if self.residual[-1] == j:
                # a negative-side residual hands its parked counts to the negative half
                for gg, r in self.discarded.items():
                    if r == j:
                        self.discarded[gg] = new
                self.residual[-1] = new
            count += 1
        self.active.sort()
        return count


def _cut_positions(ledger: ClusterLedger, h: Hyperplane) -> list[int]:
    out = []
    for j in ledger.active:
        nonneg = nonnegative_side(h.score(ledger.points[ledger.members[j]]), h)
        if nonneg.any() and not nonneg.all():
            out.append(j)
    return out


def _upper_bound_point(inst: Instance, ledger: ClusterLedger, h: Hyperplane, xi: np.ndarray,
                       penalties: PenaltyConfig, tau: int) -> tuple[np.ndarray, float]:
    """Feasible clustered point built from a hyperplane: z by the sign of each centroid score."""
    z = (h.score(ledger.centroids()) >= 0).astype(float)
    total = float(np.dot(ledger.weights(), z))
    eta = (max(0.0, tau - total), max(0.0, total - tau))
    obj = float(0.5 * h.omega @ h.omega + penalties.C1 * xi.sum() + penalties.C2 * sum(eta))
    vec = np.concatenate([h.omega, [h.b], xi, eta, z])
    return vec, obj


def _lift(inst: Instance, h: Hyperplane, zc: np.ndarray, owner: np.ndarray, penalties: PenaltyConfig,
          tau: int) -> tuple[FeasiblePoint, int]:
    z = np.round(zc)[owner]
    side = h.side(inst.x_unl)
    bad = ((side > 0) & (z < 0.5)) | ((side < 0) & (z > 0.5))
    # only reachable through solver round-off on a centroid sitting on the hyperplane
    z[bad] = (side[bad] > 0).astype(float)
    return point_from_assignment(h, inst, z, penalties, tau), int(bad.sum())


def _run(inst: Instance, cfg: RcmConfig, improved: bool) -> RcmResult:
    start = time.monotonic()
    pen = cfg.penalties
    tau = inst.tau if cfg.tau is None else int(cfg.tau)
    m = inst.m
    if m == 0:
        raise RcmError("no unlabeled points to cluster")
    k1 = min(cfg.k1, m)
    M = big_m_initial(inst, pen.C1, pen.C2, tau)
    km = kmeans(inst.x_unl, k1, cfg.seed, cfg.kmeans_max_iter)
    ledger = ClusterLedger(inst.x_unl, list(km.clustering.members))
    delta_hat = cfg.delta_hat_1
    trace: list[TraceRow] = []
    iterations = solves = 0
    prev_h: Hyperplane | None = None
    warm: np.ndarray | None = None
    last = None  # (point, zc, owner, centroids, weights)
    hit = False

    while True:
        remaining = cfg.time_limit - (time.monotonic() - start)
        if remaining <= 0:
            hit = True
            break
        cents, weights, owner = ledger.centroids(), ledger.weights(), ledger.owner()
        prob = build_clustered(inst, cents, weights, pen, tau, M)
        opts = BbOptions(time_limit=remaining, warm_start=warm)
        try:
            sol = solve_miqp(prob, opts)
        except BbError:
            sol = solve_miqp(prob, BbOptions(time_limit=remaining))
        solves += 1
        if sol.incumbent is None:
            hit = True
            break
        point = FeasiblePoint.from_vector(sol.incumbent, prob.layout, pen)
        h = point.hyperplane
        zc = np.round(point.z)
        last = (point, zc, owner, cents, weights)
        if sol.status is BbStatus.TIME_LIMIT:
            hit = True
            break

        delta = None
        n_side = 0
        if improved:
            scores_c = h.score(cents)
            delta = compute_delta(h, cents, delta_hat)
            parked_before = list(ledger.discarded)
            pos = {j: p for p, j in enumerate(ledger.active)}
            # side changes among parked clusters, and parked clusters whose residual now sits elsewhere
            J = set()
            for g in parked_before:
                pts = inst.x_unl[ledger.members[g]]
                now = nonnegative_side(h.score(pts), h)
                if prev_h is not None and np.any(nonnegative_side(prev_h.score(pts), prev_h) != now):
                    J.add(g)
                side = h.side(pts)
                rz = zc[pos[ledger.discarded[g]]]
                if np.any((side > 0) & (rz < 0.5)) or np.any((side < 0) & (rz > 0.5)):
                    J.add(g)
            n_side = len(J)
            cut_now = set(_cut_positions(ledger, h))
            if len(ledger.active) > cfg.k_plus:
                _park_far_clusters(ledger, inst, h, delta, scores_c, cut_now)
            for g in parked_before:
                if g in J or np.any(np.abs(h.score(inst.x_unl[ledger.members[g]])) <= delta):
                    ledger.reactivate(g)
            for s in (1, -1):
                if ledger.residual[s] is not None and not ledger.is_residual(ledger.residual[s]):
                    ledger.residual[s] = None
            if J:
                delta_hat = min(delta_hat + cfg.delta_tilde, 1.0)
            n_cut = ledger.split(h)
            cont = bool(J) or n_cut > 0
        else:
            n_cut = ledger.split(h)
            cont = n_cut > 0

        row = TraceRow(solves, len(cents), point.objective, delta, len(ledger.discarded), n_side, M, n_cut,
                       time.monotonic() - start, delta_hat if improved else None,
                       float(np.max(np.abs(h.score(inst.x_unl)))), M)
        trace.append(row)
        if sum(ledger.members[j].size for j in ledger.active) + sum(
                ledger.members[g].size for g in ledger.discarded) != m or ledger.total() != m:
            raise RcmError("cluster counts no longer add up to m")
        if not cont:
            break
        iterations += 1
        warm, f_tilde = _upper_bound_point(inst, ledger, h, point.xi, pen, tau)
        if improved:
            M = min(M, big_m_update(f_tilde, inst.max_norm))
            row.next_M = M
        prev_h = h

    if last is None:
        # nothing solved in time: fall back to the trivial hyperplane
        h0 = Hyperplane(np.zeros(inst.dim), 0.0)
        lifted = lift_svm_solution(h0, inst, pen, tau)
        empty = FeasiblePoint(h0, lifted.xi, lifted.eta, np.zeros(0), lifted.objective)
        return RcmResult(empty, lifted, iterations, solves, len(ledger.active), M, True,
                         np.zeros(m, dtype=int), np.zeros((0, inst.dim)), np.zeros(0), trace, 0,
                         "ircm" if improved else "rcm")
    point, zc, owner, cents, weights = last
    if hit:
        # the last hyperplane may cut clusters: read z off the sides instead
        lifted, repairs = lift_svm_solution(point.hyperplane, inst, pen, tau), 0
    else:
        lifted, repairs = _lift(inst, point.hyperplane, zc, owner, pen, tau)
    return RcmResult(point, lifted, iterations, solves, len(cents), M, hit, owner, cents, weights, trace, repairs,
                     "ircm" if improved else "rcm")


def _park_far_clusters(ledger: ClusterLedger, inst: Instance, h: Hyperplane, delta: float,
                       scores_c: np.ndarray, cut_now: set[int]) -> None:
    pos = {j: p for p, j in enumerate(ledger.active)}
    far = []
    for j in ledger.active:
        if j in cut_now or ledger.is_residual(j):
            continue
        if np.all(np.abs(h.score(inst.x_unl[ledger.members[j]])) > delta):
            far.append(j)
    for s in (1, -1):
        side_far = [j for j in far if np.sign(scores_c[pos[j]]) == s]
        if not side_far:
            continue
        res = ledger.residual[s]
        if res is None or res not in ledger.active:
            # the farthest active cluster on this side becomes the residual
            on_side = [j for j in ledger.active if np.sign(scores_c[pos[j]]) == s and j not in cut_now]
            if not on_side:
                continue
            res = max(on_side, key=lambda j: (s * scores_c[pos[j]], -j))
            ledger.residual[s] = res
        for j in side_far:
            if j != res:
                ledger.discard(j, res)


def rcm(inst: Instance, cfg: RcmConfig) -> RcmResult:
    """Re-clustering: big-M fixed at its initial value, no parking of clusters."""
    return _run(inst, cfg, improved=False)


def ircm(inst: Instance, cfg: RcmConfig) -> RcmResult:
    return _run(inst, cfg, improved=True)


def iteration_bound(m: int, k1: int, delta_hat_1: float | None = None, delta_tilde: float | None = None) -> float:
    """Worst-case loop count: m - k1 for RCM, plus m + (1 - delta_hat_1)/delta_tilde for IRCM."""
    k1 = min(k1, m)
    if delta_hat_1 is None:
        return float(m - k1)
    return 2 * m - k1 + (1.0 - delta_hat_1) / delta_tilde


__all__ = ["ClusterLedger", "RcmConfig", "RcmError", "RcmResult", "TraceRow", "default_k1", "ircm",
           "iteration_bound", "rcm"]
