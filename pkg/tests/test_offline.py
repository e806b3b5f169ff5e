import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from instances import brute_force_kp, random_kp, random_mnc_instance
from wptsim.offline import (
    InstanceTooLargeError,
    KnapsackInstance,
    MNCSolver,
    MNLSolver,
    NonIntegerCostError,
    OfflineInstance,
    evaluate,
    kp_to_mnc,
    kp_to_mnl,
    solve_kp,
    solve_mnc_bruteforce,
    solve_mnc_dp,
    solve_mnl_bruteforce,
)


def one_round(requests_by_range, budget, cons=0.0, levels=0.0, battery=100.0):
    """One agent, one round; requests given per range index (0 = out of range)."""
    k = len(requests_by_range)
    t_in = np.zeros((1, 1, k))
    entry = np.full((1, 1, k), np.nan)
    for j, m in enumerate(requests_by_range):
        if m:
            t_in[0, 0, j] = 1.0
            entry[0, 0, j] = (j + 1) / math.sqrt(m)
    return OfflineInstance(
        ranges=np.arange(1.0, k + 1.0),
        charger_energy=budget,
        battery=battery,
        t_in=t_in,
        entry_distance=entry,
        consumption=np.full((1, 1, k), cons),
        initial_levels=np.array([levels]),
    )


def test_kp_examples():
    assert solve_kp(KnapsackInstance(((1, 1), (2, 3)), 3)) == 2
    assert solve_kp(KnapsackInstance(((1, 1), (2, 3)), 0)) == 0
    assert solve_kp(KnapsackInstance(((7, 5),), 5)) == 7


def test_kp_rejects_zero_items():
    with pytest.raises(ValueError):
        KnapsackInstance(((0, 5),), 3)
    with pytest.raises(ValueError):
        KnapsackInstance(((2, 0),), 3)


def test_kp_matches_subset_enumeration():
    r = np.random.default_rng(0)
    for _ in range(300):
        kp = random_kp(r, 8, 9, 9, 25)
        assert solve_kp(kp) == brute_force_kp(kp)


def test_mnc_zero_budget():
    assert solve_mnc_bruteforce(one_round([0, 5, 5], 0.0)).objective == 0


def test_mnc_smaller_request_wins():
    # R1 asks 2C, R2 asks exactly C
    sol = solve_mnc_bruteforce(one_round([8, 4], 4.0))
    assert sol.objective == 1 and sol.assignment == [1]


def test_mnc_reduction_instance():
    inst = kp_to_mnc(KnapsackInstance(((1, 1), (2, 3)), 3))
    assert solve_mnc_bruteforce(inst).objective == 2


def test_mnc_construction_values():
    inst = kp_to_mnc(KnapsackInstance(((2, 8),), 8), radius=2.0)
    assert inst.horizon == 1 and inst.n_agents == 2
    np.testing.assert_allclose(inst.entry_distance[0, :, 1], [1.0, 1.0])
    np.testing.assert_allclose(inst.consumption[0, :, 1], [4.0, 4.0])
    np.testing.assert_allclose(inst.received()[0, :, 1], [4.0, 4.0])
    inst = kp_to_mnc(KnapsackInstance(((1, 1),), 1), radius=1.0)
    assert inst.entry_distance[0, 0, 1] == 1.0 and inst.received()[0, 0, 1] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 8)), min_size=1, max_size=6))
def test_mnc_round_cost_equals_weight(items):
    kp = KnapsackInstance(tuple(items), 10)
    inst = kp_to_mnc(kp)
    K = inst.charger_energy / 10
    for t, (v, w) in enumerate(items):
        assert inst.received()[t, :, 1].sum() == pytest.approx(w * K)
        assert np.all(inst.entry_distance[t, :v, 1] <= inst.ranges[1] + 1e-12)


def test_mnl_construction_values():
    inst = kp_to_mnl(KnapsackInstance(((3, 9),), 9), radius=3.0)
    assert inst.entry_distance[1, 0, 1] == pytest.approx(1.0)
    assert inst.received()[1, 0, 1] == pytest.approx(9.0)
    assert inst.horizon == 4
    kp = KnapsackInstance(((2, 1), (3, 4), (1, 1)), 5)
    assert kp_to_mnl(kp).horizon == 1 + 6


def test_mnl_reduction_instance():
    inst = kp_to_mnl(KnapsackInstance(((2, 1),), 1))
    assert inst.horizon == 3
    assert solve_mnl_bruteforce(inst).objective == 2


def test_mnl_idle_agents_alive_all_rounds():
    inst = OfflineInstance(
        ranges=[1.0, 2.0],
        charger_energy=0.0,
        battery=10.0,
        t_in=np.zeros((5, 2, 2)),
        entry_distance=np.full((5, 2, 2), np.nan),
        consumption=np.zeros((5, 2, 2)),
    )
    sol = solve_mnl_bruteforce(inst)
    assert sol.objective == 5 and sol.energy_spent == 0.0


def test_mnl_drained_without_charger():
    inst = one_round([0, 0], 0.0, cons=200.0, levels=100.0)
    # counted at round end: the drain round has no energy left
    assert solve_mnl_bruteforce(inst).objective == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mnl_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    kp = random_kp(r, 5, 4, 8, 12)
    base = solve_mnl_bruteforce(kp_to_mnl(kp)).objective
    perm = r.permutation(len(kp.items)).tolist()
    assert solve_mnl_bruteforce(kp_to_mnl(kp, order=perm)).objective == base


def test_dp_matches_brute_on_random_instances():
    r = np.random.default_rng(5)
    for _ in range(100):
        inst = random_mnc_instance(r)
        b, d = solve_mnc_bruteforce(inst), solve_mnc_dp(inst)
        assert b.objective == d.objective
        assert evaluate(inst, d.assignment)["charges"] == d.objective


def test_dp_all_costs_exceed_budget():
    assert solve_mnc_dp(one_round([5, 7, 9], 4.0, cons=10.0)).objective == 0


def test_dp_single_range_equals_greedy_replay():
    r = np.random.default_rng(9)
    for _ in range(50):
        inst = random_mnc_instance(r, max_ranges=1)
        if inst.k != 1:
            continue
        # only one choice per round: the optimum is the forward simulation
        assert solve_mnc_dp(inst).objective == evaluate(inst, [0] * inst.horizon)["charges"]


def test_dp_rejects_non_integer_costs():
    inst = one_round([2.5, 0], 10.0, cons=10.0)
    with pytest.raises(NonIntegerCostError, match="denominator"):
        solve_mnc_dp(inst)
    assert solve_mnc_dp(inst, energy_denominator=2).objective == 1


def test_solutions_replay_exactly():
    r = np.random.default_rng(13)
    for _ in range(60):
        inst = random_mnc_instance(r)
        for sol in (solve_mnc_bruteforce(inst), solve_mnc_dp(inst)):
            ev = evaluate(inst, sol.assignment)
            assert ev["charges"] == sol.objective and ev["energy_spent"] == sol.energy_spent
        sol = solve_mnl_bruteforce(inst)
        ev = evaluate(inst, sol.assignment)
        assert ev["alive_rounds"] == sol.objective and ev["energy_spent"] == sol.energy_spent


def test_brute_force_guard():
    T = 24
    inst = OfflineInstance(
        ranges=[1.0, 2.0],
        charger_energy=1e9,
        battery=1e9,
        t_in=np.ones((T, 1, 2)),
        entry_distance=np.ones((T, 1, 2)),
        consumption=np.ones((T, 1, 2)),
    )
    with pytest.raises(InstanceTooLargeError):
        solve_mnc_bruteforce(inst)


def test_json_round_trip_preserves_objective():
    r = np.random.default_rng(21)
    for _ in range(20):
        inst = random_mnc_instance(r)
        back = OfflineInstance.loads(inst.dumps())
        assert solve_mnc_bruteforce(back).objective == solve_mnc_bruteforce(inst).objective
        assert back.dumps() == inst.dumps()


def test_solver_estimators():
    inst = kp_to_mnc(KnapsackInstance(((1, 1), (2, 3)), 3))
    s = MNCSolver(method="brute").fit(inst)
    assert s.objective_ == 2 and s.solution_.problem == "mnc"
    assert clone(s).get_params() == {"method": "brute", "energy_denominator": None}
    assert MNLSolver().fit(kp_to_mnl(KnapsackInstance(((2, 1),), 1))).objective_ == 2


def test_shape_validation():
    with pytest.raises(ValueError):
        OfflineInstance(
            ranges=[2.0, 1.0],
            charger_energy=1.0,
            battery=1.0,
            t_in=np.zeros((1, 1, 2)),
            entry_distance=np.zeros((1, 1, 2)),
            consumption=np.zeros((1, 1, 2)),
        )


def test_dp_refuses_level_dependent_requests():
    from wptsim.offline import NotDecomposableError

    with pytest.raises(NotDecomposableError):
        solve_mnc_dp(one_round([5, 7], 10.0, cons=0.0))
