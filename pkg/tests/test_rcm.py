import numpy as np
import pytest

from cs3vm.dataset import Instance
from cs3vm.models import Hyperplane, PenaltyConfig, big_m_update, lift_clustered_solution, objective_mismatch, p3_violation
from cs3vm.oracle import brute_force_sides
from cs3vm.rcm import ClusterLedger, RcmConfig, RcmError, default_k1, ircm, iteration_bound, rcm
from cs3vm.synthetic import random_instance

PEN = PenaltyConfig()


def check_lift(res, inst):
    M = big_m_update(res.objective, inst.max_norm)
    assert p3_violation(res.lifted, inst, PEN, inst.tau, M) <= 1e-8
    assert objective_mismatch(res.lifted, PEN) <= 1e-9


def test_k1_schedule():
    assert [default_k1(m) for m in (1, 500, 501, 1000, 1001)] == [10, 10, 20, 20, 50]


def test_config_rejects_bad_levels():
    with pytest.raises(RcmError):
        RcmConfig(delta_hat_1=1.0)
    with pytest.raises(RcmError):
        RcmConfig(k1=0)


@pytest.mark.parametrize("method", [rcm, ircm])
def test_oned_single_cluster(oned, method):
    res = method(oned, RcmConfig(k1=1))
    assert res.trace[0].cut >= 1
    assert res.objective == pytest.approx(0.5, abs=1e-7)
    assert not res.hit_time_limit
    check_lift(res, oned)


@pytest.mark.parametrize("method", [rcm, ircm])
def test_singletons_finish_after_one_solve(oned, method):
    res = method(oned, RcmConfig(k1=oned.m))
    assert res.solves == 1 and res.iterations == 0


def test_k1_clamped_to_m(oned):
    assert rcm(oned, RcmConfig(k1=50)).final_k == 3


def test_no_unlabeled_points():
    inst = Instance.build([[1.0]], [1], np.zeros((0, 1)), 0)
    with pytest.raises(RcmError):
        rcm(inst, RcmConfig())


@pytest.mark.parametrize("seed", range(25))
def test_bounds_and_lifts_on_random_instances(seed):
    inst = random_instance(3000 + seed)
    for k_plus in (50, 2):
        cfg = RcmConfig(k1=min(2, inst.m), k_plus=k_plus)
        a, b = rcm(inst, cfg), ircm(inst, cfg)
        assert a.iterations <= iteration_bound(inst.m, cfg.k1)
        assert b.iterations <= iteration_bound(inst.m, cfg.k1, cfg.delta_hat_1, cfg.delta_tilde)
        for res in (a, b):
            check_lift(res, inst)
            # honest termination: the final clustering is consistent with the final hyperplane
            lift_clustered_solution(res.hyperplane, inst, res.point.z, res.owner, PEN, inst.tau)
            assert res.lift_repairs == 0
        levels = [r.delta_hat for r in b.trace]
        assert all(x <= y for x, y in zip(levels, levels[1:])) and max(levels) <= 1.0
        for r in b.trace:
            # the big-M handed on still covers every unlabeled point at this iterate
            assert r.max_abs_score <= r.next_M + 1e-7


def test_ircm_without_parking_matches_rcm():
    for seed in range(10):
        inst = random_instance(4000 + seed)
        cfg = RcmConfig(k1=min(2, inst.m), k_plus=50)
        a, b = rcm(inst, cfg), ircm(inst, cfg)
        assert all(r.discarded == 0 for r in b.trace)
        assert b.objective == pytest.approx(a.objective, abs=1e-9)


def test_parking_happens_and_stays_sound():
    parked = 0
    for seed in range(40):
        inst = random_instance(5000 + seed, min_unlabeled=8)
        res = ircm(inst, RcmConfig(k1=min(5, inst.m), k_plus=2))
        parked += max(r.discarded for r in res.trace)
        check_lift(res, inst)
        assert res.objective >= brute_force_sides(inst, PEN, inst.tau).objective - 1e-7
    assert parked > 0


def test_ledger_reactivation_restores_cluster():
    pts = np.array([[0.0], [1.0], [5.0], [6.0], [-4.0]])
    ledger = ClusterLedger(pts, [np.array([0, 1]), np.array([2, 3]), np.array([4])])
    before = (ledger.members[1].copy(), ledger.centroid(1).copy(), ledger.members[1].size)
    ledger.discard(1, 0)
    assert ledger.weights().tolist() == [4.0, 1.0]
    assert ledger.total() == 5
    assert ledger.owner().tolist() == [0, 0, 0, 0, 1]
    ledger.reactivate(1)
    assert ledger.weights().tolist() == [2.0, 2.0, 1.0]
    assert np.array_equal(ledger.members[1], before[0])
    assert np.array_equal(ledger.centroid(1), before[1]) and ledger.members[1].size == before[2]


def test_ledger_negative_residual_hands_counts_to_negative_half():
    pts = np.array([[-1.0], [2.0], [-8.0]])
    ledger = ClusterLedger(pts, [np.array([0, 1]), np.array([2])])
    ledger.residual[-1] = 0
    ledger.discard(1, 0)
    ledger.split(Hyperplane(np.array([1.0]), 0.0))
    neg_half = ledger.residual[-1]
    assert ledger.members[neg_half].tolist() == [0]
    assert ledger.discarded[1] == neg_half
    assert ledger.total() == 3


def test_time_limit_returns_feasible_point():
    inst = random_instance(6001, min_unlabeled=10)
    res = ircm(inst, RcmConfig(k1=2, time_limit=1e-9))
    assert res.hit_time_limit
    assert p3_violation(res.lifted, inst, PEN, inst.tau, res.final_M) <= 1e-8


def test_trace_rows_serialize(oned):
    rows = [r.as_dict() for r in ircm(oned, RcmConfig(k1=1)).trace]
    assert {"iteration", "k", "objective", "delta", "discarded", "big_m"} <= set(rows[0])
