"""Warm-started re-clustering (WIRCM).

The IRCM point serves as incumbent.  Points far from its hyperplane are
probed one by one: the probe asks whether anything strictly better exists
with the point moved to the other side.  A certified "no" fixes the point on
its current side; a "yes" hands over a better incumbent.  The reduced problem
over the remaining points is then solved with the incumbent as warm start.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bb import BbOptions, BbStatus, MiqpSolution, solve_miqp
from .dataset import Instance
from .models import (FeasiblePoint, Hyperplane, MiqpProblem, big_m_update, build_fixing_problem,
                     build_reduced_problem, free_indices, point_from_assignment)
from .rcm import RcmConfig, RcmResult, ircm

WARM_CHECK_TOL = 1e-7


class WircmError(ValueError):
    pass


def default_b_max(m: int) -> int:
    if m <= 100:
        share = 0.2
    elif m <= 500:
        share = 0.25
    elif m <= 1000:
        share = 0.35
    else:
        share = 0.45
    return math.floor(share * m)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class WircmConfig:
    rcm_config: RcmConfig = RcmConfig()
    B_max: int | None = None  # None: the m-bracket schedule
    gamma: float = 1.2
    T_max: float = 40.0
    total_time_limit: float = 3600.0

    def __post_init__(self):
        if self.B_max is not None and self.B_max < 0:
            raise WircmError("B_max must be nonnegative")
        if not self.gamma >= 1.0:
            raise WircmError("gamma must be at least 1")
        if not (self.T_max > 0 and self.total_time_limit > 0):
            raise WircmError("time limits must be positive")

    def budget(self, m: int) -> tuple[int, int]:
        """(B_max, beta) for ``m`` unlabeled points; beta is capped at m."""
        b_max = default_b_max(m) if self.B_max is None else min(self.B_max, m)
        return b_max, min(m, round_half_up(self.gamma * b_max))


class ProbeOutcome(str, enum.Enum):
    IMPROVED = "improved_incumbent"
    FIXED = "fixed"
    TIMED_OUT = "timed_out"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class Probe:
    index: int
    tested_side: str
    outcome: ProbeOutcome
    f_bar: float  # incumbent value after the probe

    def to_dict(self) -> dict:
        return {"index": self.index, "tested_side": self.tested_side, "outcome": self.outcome.value,
                "f_bar": self.f_bar}


@dataclass
class FixLedger:
    S_p: list[int] = field(default_factory=list)
    S_n: list[int] = field(default_factory=list)
    probes: list[Probe] = field(default_factory=list)

    @property
    def fixed(self) -> int:
        return len(self.S_p) + len(self.S_n)

    def is_fixed(self, i: int) -> bool:
        return i in self.S_p or i in self.S_n

    def to_dict(self) -> dict:
        return {"S_p": sorted(self.S_p), "S_n": sorted(self.S_n), "probes": [p.to_dict() for p in self.probes]}


@dataclass
class WircmResult:
    solution: MiqpSolution  # the reduced-problem solve
    point: FeasiblePoint  # best point found, one z per unlabeled point
    status: BbStatus
    ledger: FixLedger
    f_bar_history: list[float]
    ircm_result: RcmResult
    big_m: float
    B_max: int
    beta: int
    warm_start_used: bool
    wall_time: float

    @property
    def objective(self) -> float:
        return self.point.objective

    @property
    def hyperplane(self) -> Hyperplane:
        return self.point.hyperplane


def _full_point(prob: MiqpProblem, x: np.ndarray, inst: Instance, S_p, S_n, tau: int) -> FeasiblePoint:
    """Expand a P5/P6 solution vector to one z per unlabeled point."""
    lay = prob.layout
    h = Hyperplane(x[lay.omega].copy(), float(x[lay.b]))
    z = np.zeros(inst.m)
    z[list(S_p)] = 1.0
    z[free_indices(inst, S_p, S_n)] = np.round(x[lay.z])
    return point_from_assignment(h, inst, z, prob.penalties, tau, x[lay.xi])


def _reduced_vector(point: FeasiblePoint, inst: Instance, S_p, S_n, tau: int) -> np.ndarray:
    free = free_indices(inst, S_p, S_n)
    z = point.z[free]
    total = float(z.sum()) + len(S_p)
    eta = (max(0.0, tau - total), max(0.0, total - tau))
    return np.concatenate([point.hyperplane.omega, [point.hyperplane.b], point.xi, eta, z])


def probe_point(inst: Instance, ledger: FixLedger, s: int, current_side: int, f_bar: float, M: float,
                T_max: float, cfg: RcmConfig, tau: int) -> tuple[ProbeOutcome, FeasiblePoint | None]:
    """Ask whether a point strictly better than ``f_bar`` exists with ``s`` on the other side."""
    if current_side == 0:
        return ProbeOutcome.SKIPPED, None
    tested = "negative" if current_side > 0 else "positive"
    prob = build_fixing_problem(inst, ledger.S_p, ledger.S_n, s, tested, cfg.penalties, tau, M)
    sol = solve_miqp(prob, BbOptions(time_limit=T_max, cutoff=f_bar))
    if sol.incumbent is not None and sol.objective < f_bar:
        return ProbeOutcome.IMPROVED, _full_point(prob, sol.incumbent, inst, ledger.S_p, ledger.S_n, tau)
    if sol.status is BbStatus.CUTOFF_INFEASIBLE:
        return ProbeOutcome.FIXED, None
    if sol.status is BbStatus.TIME_LIMIT:
        return ProbeOutcome.TIMED_OUT, None
    return ProbeOutcome.SKIPPED, None


def wircm(inst: Instance, cfg: WircmConfig, ircm_result: RcmResult | None = None) -> WircmResult:
    start = time.monotonic()
    rc = cfg.rcm_config
    tau = inst.tau if rc.tau is None else int(rc.tau)
    res = ircm(inst, rc) if ircm_result is None else ircm_result
    best = res.lifted
    f_bar = best.objective
    history = [f_bar]

    # the last big-M of IRCM; it must admit the incumbent, otherwise the bound from f_bar is used
    M = res.final_M
    scores = best.hyperplane.score(inst.x_unl)
    if np.max(np.abs(scores), initial=0.0) > M:
        M = big_m_update(f_bar, inst.max_norm)

    b_max, beta = cfg.budget(inst.m)
    ledger = FixLedger()
    order = np.argsort(-np.abs(scores), kind="stable")[:beta]
    for s in (int(i) for i in order):
        if ledger.fixed >= b_max:
            break
        remaining = cfg.total_time_limit - (time.monotonic() - start)
        if remaining <= 0:
            break
        side = int(best.hyperplane.side(inst.x_unl[s:s + 1])[0])
        outcome, point = probe_point(inst, ledger, s, side, f_bar, M, min(cfg.T_max, remaining), rc, tau)
        if outcome is ProbeOutcome.IMPROVED:
            best, f_bar = point, point.objective
        elif outcome is ProbeOutcome.FIXED:
            (ledger.S_p if side > 0 else ledger.S_n).append(s)
        ledger.probes.append(Probe(s, "none" if side == 0 else ("negative" if side > 0 else "positive"), outcome,
                                   f_bar))
        history.append(f_bar)

    prob = build_reduced_problem(inst, ledger.S_p, ledger.S_n, rc.penalties, tau, M)
    warm = _reduced_vector(best, inst, ledger.S_p, ledger.S_n, tau)
    use_warm = prob.relaxation.violation(warm) <= WARM_CHECK_TOL
    remaining = max(cfg.total_time_limit - (time.monotonic() - start), 1e-3)
    sol = solve_miqp(prob, BbOptions(time_limit=remaining, cutoff=f_bar, warm_start=warm if use_warm else None))
    if sol.incumbent is not None and sol.objective < f_bar:
        best = _full_point(prob, sol.incumbent, inst, ledger.S_p, ledger.S_n, tau)
    if sol.status in (BbStatus.OPTIMAL, BbStatus.CUTOFF_INFEASIBLE):
        status = BbStatus.OPTIMAL
    else:
        status = BbStatus.TIME_LIMIT
    return WircmResult(sol, best, status, ledger, history, res, M, b_max, beta, use_warm,
                       time.monotonic() - start)


__all__ = ["FixLedger", "Probe", "ProbeOutcome", "WircmConfig", "WircmError", "WircmResult", "default_b_max",
           "probe_point", "round_half_up", "wircm"]
