"""Exhaustive reference solver that needs no big-M.

For every assignment of unlabeled points to sides it solves the convex QP in
which the sides are imposed directly (``omega'x + b >= 0`` or ``<= 0``) and
the cardinality slack is the fixed number ``|sum(z) - tau|``.  It shares only
the QP solver with the big-M models, so agreement between the two is a real
check of the big-M constant and of the builders.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dataset import Instance
from .models import Hyperplane, PenaltyConfig
from .qp import QpProblem, solve_qp

MAX_FREE = 16
TIE_TOL = 1e-7


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class SidesOptimum:
    objective: float
    hyperplane: Hyperplane
    z: np.ndarray  # one optimal assignment
    optimal_assignments: tuple[tuple[int, ...], ...]  # every assignment within TIE_TOL of the optimum
    solved: int

    def side_is_optimal(self, idx: int, positive: bool) -> bool:
        want = 1 if positive else 0
        return any(a[idx] == want for a in self.optimal_assignments)

    def consistent_with(self, S_p, S_n) -> bool:
        """True if some optimal assignment puts S_p positive and S_n negative."""
        return any(all(a[i] == 1 for i in S_p) and all(a[i] == 0 for i in S_n) for a in self.optimal_assignments)


def sides_qp(inst: Instance, z: np.ndarray, C1: float) -> QpProblem:
    """Variables (omega, b, xi): hinge rows on labeled points, sign rows on unlabeled ones."""
    d, n, m = inst.dim, inst.n, inst.m
    nv = d + 1 + n
    rows = np.zeros((n + m, nv))
    lo = np.full(n + m, -np.inf)
    hi = np.full(n + m, np.inf)
    for i in range(n):
        y = inst.y_lab[i]
        rows[i, :d] = y * inst.x_lab[i]
        rows[i, d] = y
        rows[i, d + 1 + i] = 1.0
        lo[i] = 1.0
    for i in range(m):
        r = n + i
        rows[r, :d] = inst.x_unl[i]
        rows[r, d] = 1.0
        if z[i]:
            lo[r] = 0.0
        else:
            hi[r] = 0.0
    quad = np.concatenate([np.ones(d), np.zeros(1 + n)])
    cost = np.concatenate([np.zeros(d + 1), np.full(n, C1)])
    var_lo = np.concatenate([np.full(d + 1, -np.inf), np.zeros(n)])
    return QpProblem.build(quad, cost, rows, lo, hi, var_lo, None)


def brute_force_sides(inst: Instance, penalties: PenaltyConfig, tau: int) -> SidesOptimum:
    m = inst.m
    if m > MAX_FREE:
        raise OracleError(f"{m} unlabeled points is too many to enumerate (limit {MAX_FREE})")
    d = inst.dim
    results = []
    for bits in itertools.product((0, 1), repeat=m):
        z = np.array(bits)
        sol = solve_qp(sides_qp(inst, z, penalties.C1))
        if not sol.optimal:
            # omega = 0, b = 0 satisfies every side row, so this is a solver failure
            raise OracleError(f"side QP for z={bits} ended with status {sol.status.value}")
        f = sol.objective + penalties.C2 * abs(int(z.sum()) - tau)
        results.append((f, bits, sol.primal))
    best = min(r[0] for r in results)
    ties = tuple(r[1] for r in results if r[0] <= best + TIE_TOL * max(1.0, abs(best)))
    f, bits, v = min(results, key=lambda r: r[0])
    return SidesOptimum(best, Hyperplane(v[:d].copy(), float(v[d])), np.array(bits, dtype=float), ties,
                        len(results))
