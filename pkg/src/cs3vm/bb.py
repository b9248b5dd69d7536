"""Branch-and-bound for the binary block of the big-M problems.

Node relaxations are solved with :func:`cs3vm.qp.solve_qp`.  The search dives
depth-first until the first incumbent appears and then switches to best-bound
order.  Incumbents are always re-derived by fixing the binaries and solving
the remaining convex QP, so every reported point is exact up to QP tolerances.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import MiqpProblem
from .qp import FEAS_TOL, QpStatus, solve_qp

WARM_START_TOL = 1e-7


class BbStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"
    CUTOFF_INFEASIBLE = "CutoffInfeasible"


class BbError(ValueError):
    pass


@dataclass(frozen=True)
class BbOptions:
    time_limit: float = 3600.0
    cutoff: float | None = None
    warm_start: np.ndarray | None = None
    mip_gap_tol: float = 1e-8
    int_tol: float = 1e-6
    node_limit: int | None = None
    heuristic_rounds: int = 4
    log: Callable[[str], None] | None = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise BbError("time_limit must be positive")

    def cutoff_threshold(self) -> float:
        if self.cutoff is None:
            return math.inf
        return self.cutoff - 1e-9 * max(1.0, abs(self.cutoff))


@dataclass
class MiqpSolution:
    status: BbStatus
    incumbent: np.ndarray | None
    objective: float | None
    best_bound: float
    nodes_explored: int
    wall_time: float
    bound_history: list[float] = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.incumbent is not None


@dataclass(order=True)
class _Node:
    bound: float
    depth: int
    order: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)


class _Search:
    def __init__(self, p: MiqpProblem, opts: BbOptions):
        self.p = p
        self.opts = opts
        self.start = time.monotonic()
        self.cut = opts.cutoff_threshold()
        self.inc_x: np.ndarray | None = None
        self.inc_obj = math.inf
        self.counter = itertools.count()
        self.nodes = 0
        self.history: list[float] = []
        self.floor = math.inf  # smallest bound among nodes pruned against the incumbent or cutoff
        self.base_lo = p.relaxation.var_lo.copy()
        self.base_hi = p.relaxation.var_hi.copy()
        self.zi = p.binary_idx

    # ------------------------------------------------------------------ helpers
    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def threshold(self) -> float:
        inc = self.inc_obj - self.opts.mip_gap_tol * max(1.0, abs(self.inc_obj)) if self.inc_x is not None else math.inf
        return min(inc, self.cut)

    def log(self, msg: str) -> None:
        if self.opts.log is not None:
            self.opts.log(msg)

    def solve_fixed(self, z: np.ndarray, lo: np.ndarray | None = None, hi: np.ndarray | None = None):
        lo = (self.base_lo if lo is None else lo).copy()
        hi = (self.base_hi if hi is None else hi).copy()
        lo[self.zi] = z
        hi[self.zi] = z
        sol = solve_qp(self.p.relaxation.with_bounds(lo, hi))
        return sol if sol.status is QpStatus.OPTIMAL else None

    def offer(self, z: np.ndarray, lo=None, hi=None, source: str = "") -> bool:
        """Evaluate a binary assignment; keep it if it improves the incumbent."""
        z = np.round(z)
        if lo is not None and (np.any(z < lo[self.zi]) or np.any(z > hi[self.zi])):
            return False
        sol = self.solve_fixed(z)
        if sol is None:
            return False
        x = sol.primal.copy()
        x[self.zi] = z
        obj = self.p.relaxation.objective(x)
        if obj < self.inc_obj and obj < self.cut:
            self.inc_x, self.inc_obj = x, obj
            self.log(f"incumbent {obj:.12g} ({source}) after {self.nodes} nodes")
            return True
        return False

    def heuristics(self, x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        """Rounding heuristics driven by the hyperplane of a relaxation point."""
        p = self.p
        if p.num_binaries == 0:
            return
        fixed = lo[self.zi] == hi[self.zi]
        target = p.tau - p.card_offset
        seen: set[bytes] = set()
        for _ in range(max(1, self.opts.heuristic_rounds)):
            h = p.hyperplane(x)
            score = h.score(p.z_points)
            cands = [np.where(score >= 0, 1.0, 0.0), np.round(x[self.zi])]
            # fill the cardinality target with the highest scores
            order = np.argsort(-score, kind="stable")
            cum = np.concatenate([[0.0], np.cumsum(p.z_weights[order])])
            k = int(np.argmin(np.abs(cum - target)))
            z = np.zeros(p.num_binaries)
            z[order[:k]] = 1.0
            cands.append(z)
            improved = False
            for z in cands:
                z = np.where(fixed, lo[self.zi], z)
                key = z.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                if self.offer(z, lo, hi, "rounding"):
                    improved = True
            if not improved or self.inc_x is None:
                break
            x = self.inc_x

    # ------------------------------------------------------------------ main loop
    def run(self) -> MiqpSolution:
        opts = self.opts
        if opts.warm_start is not None:
            self.accept_warm_start(np.asarray(opts.warm_start, dtype=float))

        root = _Node(-math.inf, 0, next(self.counter), self.base_lo.copy(), self.base_hi.copy())
        dive: list[_Node] = [root]
        heap: list[_Node] = []
        status = None
        while dive or heap:
            if self.elapsed() >= opts.time_limit:
                status = BbStatus.TIME_LIMIT
                break
            if opts.node_limit is not None and self.nodes >= opts.node_limit:
                status = BbStatus.FEASIBLE if self.inc_x is not None else BbStatus.TIME_LIMIT
                break
            if self.inc_x is not None and dive:
                for node in dive:
                    heapq.heappush(heap, node)
                dive.clear()
            node = dive.pop() if dive else heapq.heappop(heap)
            self.record_bound(dive, heap, node)
            if node.bound >= self.threshold():
                self.floor = min(self.floor, node.bound)
                continue
            self.process(node, dive, heap)

        open_nodes = dive + heap
        if status is None:
            if self.inc_x is not None:
                status = BbStatus.OPTIMAL
            elif opts.cutoff is not None:
                status = BbStatus.CUTOFF_INFEASIBLE
            else:
                status = BbStatus.INFEASIBLE
        bound = min([n.bound for n in open_nodes] + [self.floor, self.inc_obj])
        if status is BbStatus.INFEASIBLE:
            bound = math.inf
        if self.history and bound < self.history[-1]:
            bound = self.history[-1]
        self.history.append(bound)
        obj = self.inc_obj if self.inc_x is not None else None
        self.log(f"done: {status.value} obj={obj} bound={bound:.12g} nodes={self.nodes}")
        return MiqpSolution(status, self.inc_x, obj, bound, self.nodes, self.elapsed(), self.history)

    def record_bound(self, dive, heap, current: _Node) -> None:
        vals = [current.bound] + [n.bound for n in dive] + [n.bound for n in heap]
        b = min(min(vals), self.floor, self.inc_obj)
        if self.history and b < self.history[-1]:
            b = self.history[-1]
        self.history.append(b)

    def process(self, node: _Node, dive: list[_Node], heap: list[_Node]) -> None:
        p, opts = self.p, self.opts
        sol = solve_qp(p.relaxation.with_bounds(node.lo, node.hi))
        self.nodes += 1
        if sol.status is not QpStatus.OPTIMAL:
            self.log(f"node {node.order} depth {node.depth}: {sol.status.value}")
            return
        bound = max(sol.objective, node.bound)
        self.log(f"node {node.order} depth {node.depth}: bound {bound:.12g} incumbent {self.inc_obj:.12g}")
        if bound >= self.threshold():
            self.floor = min(self.floor, bound)
            return
        x = sol.primal
        if node.depth == 0 or self.nodes % 50 == 0:
            self.heuristics(x, node.lo, node.hi)
            if bound >= self.threshold():
                self.floor = min(self.floor, bound)
                return
        zv = x[self.zi]
        free = node.lo[self.zi] < node.hi[self.zi]
        frac = np.abs(zv - np.round(zv))
        frac[~free] = -1.0
        if frac.max(initial=-1.0) <= opts.int_tol:
            # integral relaxation: its rounded point is exact for this box
            self.offer(zv, node.lo, node.hi, "integral node")
            inc_gap = self.inc_obj - bound
            if not free.any() or inc_gap <= opts.mip_gap_tol * max(1.0, abs(self.inc_obj)):
                if self.inc_x is not None:
                    self.floor = min(self.floor, bound)
                return
        j = int(np.argmax(frac))
        var = self.zi[j]
        children = []
        for val in (0.0, 1.0):
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[var] = hi[var] = val
            children.append(_Node(bound, node.depth + 1, next(self.counter), lo, hi))
        # dive toward the side the relaxation prefers: push it last
        if zv[j] >= 0.5:
            children.reverse()
        if self.inc_x is None:
            dive.extend(children)
        else:
            for c in children:
                heapq.heappush(heap, c)

    def accept_warm_start(self, x: np.ndarray) -> None:
        p = self.p
        if x.size != p.relaxation.num_vars or not np.all(np.isfinite(x)):
            raise BbError("warm start has the wrong size or non-finite entries")
        viol = p.relaxation.violation(x)
        z = x[self.zi]
        integ = float(np.max(np.abs(z - np.round(z)), initial=0.0))
        if viol > WARM_START_TOL or integ > self.opts.int_tol:
            raise BbError(f"warm start is infeasible (violation {viol:.3g}, integrality {integ:.3g})")
        obj = p.relaxation.objective(x)
        if obj < self.cut:
            x = x.copy()
            x[self.zi] = np.round(z)
            self.inc_x, self.inc_obj = x, obj
        # polishing the continuous part can only help
        self.offer(z, source="warm start")


def solve_miqp(p: MiqpProblem, opts: BbOptions | None = None) -> MiqpSolution:
    return _Search(p, opts or BbOptions()).run()


def brute_force_miqp(p: MiqpProblem, max_binaries: int = 20) -> MiqpSolution:
    """Enumerate every binary assignment and solve the remaining QP.

    Assignments outside the current bounds of the binaries are skipped.
    """
    k = p.num_binaries
    if k > max_binaries:
        raise BbError(f"{k} binaries exceed the enumeration limit {max_binaries}")
    start = time.monotonic()
    lo0, hi0 = p.relaxation.var_lo, p.relaxation.var_hi
    zi = p.binary_idx
    best_x, best_obj, count = None, math.inf, 0
    for bits in itertools.product((0.0, 1.0), repeat=k):
        z = np.array(bits)
        if np.any(z < lo0[zi]) or np.any(z > hi0[zi]):
            continue
        lo, hi = lo0.copy(), hi0.copy()
        lo[zi] = hi[zi] = z
        sol = solve_qp(p.relaxation.with_bounds(lo, hi))
        count += 1
        if sol.status is QpStatus.OPTIMAL and sol.objective < best_obj - 1e-12:
            best_x, best_obj = sol.primal, sol.objective
    wall = time.monotonic() - start
    if best_x is None:
        return MiqpSolution(BbStatus.INFEASIBLE, None, None, math.inf, count, wall)
    return MiqpSolution(BbStatus.OPTIMAL, best_x, best_obj, best_obj, count, wall)


def incumbent_violation(p: MiqpProblem, x: np.ndarray) -> float:
    z = x[p.binary_idx]
    return max(p.relaxation.violation(x), float(np.max(np.abs(z - np.round(z)), initial=0.0)))


__all__ = ["BbError", "BbOptions", "BbStatus", "MiqpSolution", "brute_force_miqp", "incumbent_violation",
           "solve_miqp", "FEAS_TOL"]
