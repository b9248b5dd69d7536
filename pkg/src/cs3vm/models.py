"""Problem builders for the SVM and the cardinality-constrained models, plus lifts.

Every model shares one variable layout::

    [ omega (d) | b | xi (n) | eta1 | eta2 | z (k) ]

and the objective ``1/2 |omega|^2 + C1 sum(xi) + C2 (eta1 + eta2)``.  The
hyperplane enters all rows as ``omega'x + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import Instance
from .qp import QpProblem, QpStatus, solve_qp

BOUNDARY_REL = 1e-9


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    C1: float = 1.0
    C2: float = 1.0

    def __post_init__(self):
        if not (self.C1 > 0 and self.C2 > 0):
            raise ModelError("penalty parameters must be positive")


@dataclass(frozen=True)
class Hyperplane:
    omega: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).ravel())
        object.__setattr__(self, "b", float(self.b))
        if not (np.all(np.isfinite(self.omega)) and math.isfinite(self.b)):
            raise ModelError("hyperplane entries must be finite")

    def score(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.omega + self.b

    @property
    def band(self) -> float:
        """Half-width of the numeric band treated as lying on the hyperplane."""
        return BOUNDARY_REL * (1.0 + float(np.linalg.norm(self.omega)))

    def side(self, x: np.ndarray) -> np.ndarray:
        """+1, -1, or 0 for points inside the boundary band."""
        s = self.score(x)
        out = np.sign(s).astype(int)
        out[np.abs(s) <= self.band] = 0
        return out


@dataclass(frozen=True)
class Layout:
    """Index ranges of the variable roles in a primal vector."""

    dim: int
    n: int
    k: int

    @property
    def omega(self) -> slice:
        return slice(0, self.dim)

    @property
    def b(self) -> int:
        return self.dim

    @property
    def xi(self) -> slice:
        return slice(self.dim + 1, self.dim + 1 + self.n)

    @property
    def eta1(self) -> int:
        return self.dim + 1 + self.n

    @property
    def eta2(self) -> int:
        return self.dim + 2 + self.n

    @property
    def z(self) -> slice:
        start = self.dim + 3 + self.n
        return slice(start, start + self.k)

    @property
    def num_vars(self) -> int:
        return self.dim + 3 + self.n + self.k

    def roles(self) -> dict[str, slice]:
        return {"omega": self.omega, "b": slice(self.b, self.b + 1), "xi": self.xi,
                "eta1": slice(self.eta1, self.eta1 + 1), "eta2": slice(self.eta2, self.eta2 + 1), "z": self.z}

    def names(self) -> tuple[str, ...]:
        return (tuple(f"w{i}" for i in range(self.dim)) + ("b",) + tuple(f"xi{i}" for i in range(self.n))
                + ("eta1", "eta2") + tuple(f"z{j}" for j in range(self.k)))


@dataclass(frozen=True)
class MiqpProblem:
    relaxation: QpProblem
    binary_idx: np.ndarray
    layout: Layout
    big_m: float
    # what the z block stands for: one representative point and weight per binary
    z_points: np.ndarray
    z_weights: np.ndarray
    card_offset: int
    tau: int
    penalties: PenaltyConfig
    kind: str = "P3"

    @property
    def meta(self) -> dict[str, slice]:
        return self.layout.roles()

    @property
    def num_binaries(self) -> int:
        return int(self.binary_idx.size)

    def hyperplane(self, v: np.ndarray) -> Hyperplane:
        return Hyperplane(v[self.layout.omega], v[self.layout.b])

    def with_bounds(self, lo: np.ndarray, hi: np.ndarray) -> "MiqpProblem":
        return MiqpProblem(self.relaxation.with_bounds(lo, hi), self.binary_idx, self.layout, self.big_m,
                           self.z_points, self.z_weights, self.card_offset, self.tau, self.penalties, self.kind)


@dataclass(frozen=True)
class FeasiblePoint:
    hyperplane: Hyperplane
    xi: np.ndarray
    eta: tuple[float, float]
    z: np.ndarray
    objective: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.hyperplane.omega, [self.hyperplane.b], self.xi, self.eta,
                               np.asarray(self.z, dtype=float)])

    @classmethod
    def from_vector(cls, v: np.ndarray, layout: Layout, penalties: PenaltyConfig) -> "FeasiblePoint":
        h = Hyperplane(v[layout.omega], v[layout.b])
        xi = np.asarray(v[layout.xi], dtype=float)
        eta = (float(v[layout.eta1]), float(v[layout.eta2]))
        z = np.asarray(v[layout.z], dtype=float)
        return cls(h, xi, eta, z, objective_value(h, xi, eta, penalties))


def objective_value(h: Hyperplane, xi: np.ndarray, eta: Sequence[float], penalties: PenaltyConfig) -> float:
    return float(0.5 * np.dot(h.omega, h.omega) + penalties.C1 * np.sum(xi)
                 + penalties.C2 * (eta[0] + eta[1]))


def big_m_initial(inst: Instance, C1: float, C2: float, tau: int) -> float:
    """Big-M that is valid before any feasible point is known.

    It comes from the feasible point omega = 0 with b chosen to classify every
    unlabeled point positive.
    """
    if not 0 <= tau <= inst.m:
        raise ModelError("tau must lie in [0, m]")
    radicand = 2.0 * (2.0 * C1 * inst.n_negative + C2 * (inst.m - tau))
    return 2.0 * math.sqrt(radicand) * inst.max_norm + 1.0


def big_m_update(f_upper: float, points: np.ndarray | float) -> float:
    """Big-M implied by a known objective upper bound.

    ``points`` is either the point matrix or the precomputed maximum norm.
    """
    if f_upper < 0:
        raise ModelError("objective bound must be nonnegative")
    if np.ndim(points) == 0:
        r = float(points)
    else:
        r = float(np.linalg.norm(np.atleast_2d(points), axis=1).max(initial=0.0))
    return 2.0 * math.sqrt(2.0 * f_upper) * r + 1.0


# --------------------------------------------------------------------------- builders

def _base_rows(inst: Instance, layout: Layout) -> tuple[list, list, list]:
    """Rows y_i (omega'x_i + b) + xi_i >= 1 for every labeled point."""
    n = inst.n
    blocks = []
    if n:
        yx = inst.y_lab[:, None] * inst.x_lab
        A = np.zeros((n, layout.num_vars))
        A[:, layout.omega] = yx
        A[:, layout.b] = inst.y_lab
        A[np.arange(n), layout.xi.start + np.arange(n)] = 1.0
        blocks.append(A)
    return blocks, [np.ones(n)], [np.full(n, np.inf)]


def _bounds(layout: Layout) -> tuple[np.ndarray, np.ndarray]:
    lo = np.full(layout.num_vars, -np.inf)
    hi = np.full(layout.num_vars, np.inf)
    lo[layout.xi] = 0.0
    lo[layout.eta1] = lo[layout.eta2] = 0.0
    lo[layout.z] = 0.0
    hi[layout.z] = 1.0
    return lo, hi


def _objective(layout: Layout, penalties: PenaltyConfig) -> tuple[np.ndarray, np.ndarray]:
    quad = np.zeros(layout.num_vars)
    quad[layout.omega] = 1.0
    cost = np.zeros(layout.num_vars)
    cost[layout.xi] = penalties.C1
    cost[layout.eta1] = cost[layout.eta2] = penalties.C2
    return quad, cost


def build_svm(inst: Instance, C1: float) -> QpProblem:
    """The soft-margin SVM on the labeled points only (no eta, no z)."""
    if inst.n < 1:
        raise ModelError("the SVM needs at least one labeled point")
    layout = Layout(inst.dim, inst.n, 0)
    blocks, lo, hi = _base_rows(inst, layout)
    quad, cost = _objective(layout, PenaltyConfig(C1, 1.0))
    cost[layout.eta1] = cost[layout.eta2] = 0.0
    vlo, vhi = _bounds(layout)
    # eta has no role here; pin it to zero so the layout stays shared
    vhi[layout.eta1] = vhi[layout.eta2] = 0.0
    return QpProblem.build(quad, cost, sp.csr_matrix(np.vstack(blocks)), np.concatenate(lo), np.concatenate(hi),
                           vlo, vhi, layout.names())


def _build_card_miqp(inst: Instance, penalties: PenaltyConfig, tau: int, M: float,
                     z_points: np.ndarray, z_weights: np.ndarray, card_offset: int,
                     pos_points: np.ndarray, neg_points: np.ndarray,
                     probe: tuple[int, str] | None, kind: str) -> MiqpProblem:
    if not (M > 0 and math.isfinite(M)):
        raise ModelError("big-M must be positive and finite")
    d = inst.dim
    k = z_points.shape[0]
    layout = Layout(d, inst.n, k)
    nv = layout.num_vars
    blocks, lo, hi = _base_rows(inst, layout)

    if k:
        # omega'c + b - M z <= 0   and   omega'c + b - M z >= -M
        A = np.zeros((k, nv))
        A[:, layout.omega] = z_points
        A[:, layout.b] = 1.0
        A[np.arange(k), layout.z.start + np.arange(k)] = -M
        blocks += [A, A.copy()]
        lo += [np.full(k, -np.inf), np.full(k, -M)]
        hi += [np.zeros(k), np.full(k, np.inf)]
    for pts, positive in ((pos_points, True), (neg_points, False)):
        if pts.shape[0]:
            A = np.zeros((pts.shape[0], nv))
            A[:, layout.omega] = pts
            A[:, layout.b] = 1.0
            blocks.append(A)
            lo.append(np.zeros(pts.shape[0]) if positive else np.full(pts.shape[0], -np.inf))
            hi.append(np.full(pts.shape[0], np.inf) if positive else np.zeros(pts.shape[0]))
    if probe is not None:
        j, side = probe
        A = np.zeros((1, nv))
        A[0, layout.omega] = z_points[j]
        A[0, layout.b] = 1.0
        blocks.append(A)
        lo.append(np.zeros(1) if side == "positive" else np.full(1, -np.inf))
        hi.append(np.full(1, np.inf) if side == "positive" else np.zeros(1))

    # tau - eta1 <= sum e_j z_j + offset <= tau + eta2
    card = np.zeros((2, nv))
    card[:, layout.z] = z_weights
    card[0, layout.eta1] = 1.0
    card[1, layout.eta2] = -1.0
    blocks.append(card)
    lo.append(np.array([tau - card_offset, -np.inf]))
    hi.append(np.array([np.inf, tau - card_offset]))

    quad, cost = _objective(layout, penalties)
    vlo, vhi = _bounds(layout)
    A = sp.csr_matrix(np.vstack(blocks))
    relax = QpProblem.build(quad, cost, A, np.concatenate(lo), np.concatenate(hi), vlo, vhi, layout.names())
    return MiqpProblem(relax, np.arange(layout.z.start, layout.z.stop), layout, float(M),
                       np.asarray(z_points, dtype=float).reshape(k, d), np.asarray(z_weights, dtype=float),
                       int(card_offset), int(tau), penalties, kind)


def build_cs3vm(inst: Instance, penalties: PenaltyConfig, tau: int, M: float) -> MiqpProblem:
    empty = np.zeros((0, inst.dim))
    return _build_card_miqp(inst, penalties, tau, M, inst.x_unl, np.ones(inst.m), 0, empty, empty, None, "P3")


def build_clustered(inst: Instance, centroids: np.ndarray, counts: np.ndarray, penalties: PenaltyConfig,
                    tau: int, M: float) -> MiqpProblem:
    """Clustered problem: one binary per centroid, weighted by its member count."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 1):
        raise ModelError("every cluster must be nonempty")
    centroids = np.asarray(centroids, dtype=float).reshape(counts.size, inst.dim)
    empty = np.zeros((0, inst.dim))
    return _build_card_miqp(inst, penalties, tau, M, centroids, counts, 0, empty, empty, None, "P4")


def _check_fixed(inst: Instance, S_p: Sequence[int], S_n: Sequence[int]) -> tuple[list[int], list[int]]:
    S_p, S_n = sorted(set(int(i) for i in S_p)), sorted(set(int(i) for i in S_n))
    if set(S_p) & set(S_n):
        raise ModelError("S_p and S_n overlap")
    if any(not 0 <= i < inst.m for i in S_p + S_n):
        raise ModelError("fixed index out of range")
    return S_p, S_n


def free_indices(inst: Instance, S_p: Sequence[int], S_n: Sequence[int]) -> np.ndarray:
    fixed = set(S_p) | set(S_n)
    return np.array([i for i in range(inst.m) if i not in fixed], dtype=int)


def build_reduced_problem(inst: Instance, S_p: Sequence[int], S_n: Sequence[int], penalties: PenaltyConfig,
                          tau: int, M: float) -> MiqpProblem:
    """Points in S_p / S_n get hard side rows; binaries remain for the rest only."""
    S_p, S_n = _check_fixed(inst, S_p, S_n)
    free = free_indices(inst, S_p, S_n)
    return _build_card_miqp(inst, penalties, tau, M, inst.x_unl[free], np.ones(free.size), len(S_p),
                            inst.x_unl[S_p], inst.x_unl[S_n], None, "P6")


def build_fixing_problem(inst: Instance, S_p: Sequence[int], S_n: Sequence[int], s: int, side: str,
                         penalties: PenaltyConfig, tau: int, M: float) -> MiqpProblem:
    """Reduced problem with point ``s`` additionally forced onto ``side``.

    ``side`` is the side being tested, i.e. the opposite of the side ``s``
    currently lies on.
    """
    if side not in ("positive", "negative"):
        raise ModelError("side must be 'positive' or 'negative'")
    S_p, S_n = _check_fixed(inst, S_p, S_n)
    if s in S_p or s in S_n:
        raise ModelError(f"point {s} is already fixed")
    free = free_indices(inst, S_p, S_n)
    j = int(np.flatnonzero(free == s)[0])
    return _build_card_miqp(inst, penalties, tau, M, inst.x_unl[free], np.ones(free.size), len(S_p),
                            inst.x_unl[S_p], inst.x_unl[S_n], (j, side), "P5")


# --------------------------------------------------------------------------- lifts

def hinge_slacks(h: Hyperplane, inst: Instance) -> np.ndarray:
    return np.maximum(0.0, 1.0 - inst.y_lab * h.score(inst.x_lab))


def _tighten_offset(h: Hyperplane, inst: Instance, z: np.ndarray, xi: np.ndarray) -> Hyperplane:
    """Pull an oversized offset back to |b| <= ||omega|| max||x|| + 1.

    When omega is (nearly) zero the offset is not unique, and a solver may
    return any value in a long feasible interval.  Shifting b inside the
    interval that keeps every labeled row (with the same slacks) and every
    side row of z satisfied leaves the objective untouched, and the bound is
    always reachable: a lower limit comes from a row ``b >= 1 - xi - w.x`` or
    ``b >= -w.x``, both at most ``||omega|| max||x|| + 1``.
    """
    limit = float(np.linalg.norm(h.omega)) * inst.max_norm + 1.0
    if abs(h.b) <= limit:
        return h
    wx_lab, wx_unl = inst.x_lab @ h.omega, inst.x_unl @ h.omega
    pos, neg = inst.y_lab > 0, inst.y_lab < 0
    up = z > 0.5
    lo = max(np.max(1.0 - xi[pos] - wx_lab[pos], initial=-np.inf), np.max(-wx_unl[up], initial=-np.inf), -limit)
    hi = min(np.min(xi[neg] - 1.0 - wx_lab[neg], initial=np.inf), np.min(-wx_unl[~up], initial=np.inf), limit)
    if lo > hi:
        return h
    return Hyperplane(h.omega, float(np.clip(h.b, lo, hi)))


def point_from_assignment(h: Hyperplane, inst: Instance, z: np.ndarray, penalties: PenaltyConfig,
                          tau: int, xi: np.ndarray | None = None) -> FeasiblePoint:
    """Complete (omega, b, z) with the cheapest xi and eta."""
    z = np.asarray(z, dtype=float)
    xi = hinge_slacks(h, inst) if xi is None else np.maximum(np.asarray(xi, dtype=float), hinge_slacks(h, inst))
    h = _tighten_offset(h, inst, z, xi)
    total = float(z.sum())
    eta = (max(0.0, tau - total), max(0.0, total - tau))
    return FeasiblePoint(h, xi, eta, z, objective_value(h, xi, eta, penalties))


def lift_svm_solution(h: Hyperplane, inst: Instance, penalties: PenaltyConfig, tau: int) -> FeasiblePoint:
    """Turn any hyperplane into a feasible point by reading z off the sides.

    Points inside the boundary band all receive z = 1 if the off-band
    positive count does not exceed tau, and z = 0 otherwise.
    """
    side = h.side(inst.x_unl)
    z = (side > 0).astype(float)
    on_plane = side == 0
    if on_plane.any():
        z[on_plane] = 1.0 if z[~on_plane].sum() <= tau else 0.0
    return point_from_assignment(h, inst, z, penalties, tau)


def lift_clustered_solution(h: Hyperplane, inst: Instance, z_clusters: np.ndarray, owner: np.ndarray,
                            penalties: PenaltyConfig, tau: int) -> FeasiblePoint:
    """Copy each cluster's z to the points it represents.

    ``owner[i]`` is the position in ``z_clusters`` of the cluster that carried
    unlabeled point ``i`` in the clustered problem.  A point strictly on the
    wrong side of its cluster's decision means the cluster was cut.
    """
    z_clusters = np.round(np.asarray(z_clusters, dtype=float))
    z = z_clusters[np.asarray(owner, dtype=int)]
    side = h.side(inst.x_unl)
    wrong = ((side > 0) & (z < 0.5)) | ((side < 0) & (z > 0.5))
    if wrong.any():
        raise ModelError(f"hyperplane cuts the clusters of points {np.flatnonzero(wrong).tolist()}")
    return point_from_assignment(h, inst, z, penalties, tau)


def p3_violation(point: FeasiblePoint, inst: Instance, penalties: PenaltyConfig, tau: int, M: float) -> float:
    """Largest constraint violation of ``point`` in the full big-M problem (integrality included)."""
    prob = build_cs3vm(inst, penalties, tau, M)
    v = point.vector()
    if v.size != prob.layout.num_vars:
        raise ModelError("point does not match the problem dimensions")
    integrality = float(np.max(np.minimum(np.abs(point.z), np.abs(point.z - 1.0)), initial=0.0))
    return max(prob.relaxation.violation(v), integrality)


def objective_mismatch(point: FeasiblePoint, penalties: PenaltyConfig) -> float:
    return abs(point.objective - objective_value(point.hyperplane, point.xi, point.eta, penalties))


@dataclass
class SvmResult:
    hyperplane: Hyperplane
    objective: float
    status: QpStatus
    xi: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def solve_svm(inst: Instance, C1: float = 1.0) -> SvmResult:
    """Soft-margin SVM on the labeled points only."""
    prob = build_svm(inst, C1)
    sol = solve_qp(prob)
    if not sol.optimal:
        raise ModelError(f"SVM solve ended with status {sol.status.value}")
    layout = Layout(inst.dim, inst.n, 0)
    v = sol.primal
    return SvmResult(Hyperplane(v[layout.omega], float(v[layout.b])), sol.objective, sol.status, v[layout.xi])
