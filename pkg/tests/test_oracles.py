import numpy as np
import pytest
from conftest import make_e2, make_single

from pdmdp.instances import gen_instance
from pdmdp.model import DmdpInstance, DualVariable, RandomizedPolicy, bellman_backup, duality_gap
from pdmdp.oracles import (
    GuardExceeded,
    OracleError,
    brute_force_optimal,
    ergodicity_constants,
    occupancy_dual,
    policy_iteration,
    stationary_direct,
    stationary_distribution,
    value_iteration,
)


def test_brute_force_examples():
    sol = brute_force_optimal(make_e2())
    assert np.allclose(sol.v_star, [1.0, 2.0], atol=1e-12)
    assert sol.optimal_policy.tolist() == [1, 0]
    assert sol.method == "enumeration"
    assert brute_force_optimal(make_single()).v_star == pytest.approx([10.0])


def test_brute_force_ties_go_to_lowest_index():
    rng = np.random.default_rng(0)
    row = rng.dirichlet(np.ones(3), size=3)
    p = np.repeat(row[:, None, :], 2, axis=1)
    inst = DmdpInstance(p, np.full((3, 2), 0.4), 0.8)
    assert brute_force_optimal(inst).optimal_policy.tolist() == [0, 0, 0]


def test_value_iteration_examples():
    assert value_iteration(make_single(), 1e-8).v_star == pytest.approx([10.0], abs=1e-8)
    sol = value_iteration(make_e2(), 1e-8)
    assert np.allclose(sol.v_star, [1, 2], atol=1e-8)
    # One sweep from zero gives the best immediate rewards.
    assert bellman_backup(make_e2(), np.zeros(2))[0].tolist() == [0.0, 1.0]
    with pytest.raises(OracleError):
        value_iteration(make_e2(), 1e-8, max_sweeps=1)
    with pytest.raises(ValueError):
        value_iteration(make_e2(), 0.0)


def test_policy_iteration_examples():
    sol = policy_iteration(make_e2())
    assert sol.optimal_policy[0] == 1
    assert sol.rounds <= 3  # two improvements plus the confirming round
    assert np.allclose(sol.v_star, [1, 2], atol=1e-12)
    assert policy_iteration(make_single()).rounds == 1


@pytest.mark.parametrize("seed", range(5))
def test_policy_iteration_matches_enumeration(seed):
    inst = gen_instance(4, 3, 0.9, kind="dirichlet", seed=seed)
    assert np.allclose(policy_iteration(inst).v_star, brute_force_optimal(inst).v_star, atol=1e-8)


def test_guard():
    big = gen_instance(13, 3, 0.9, seed=0)
    with pytest.raises(GuardExceeded):
        brute_force_optimal(big)
    with pytest.raises(GuardExceeded):
        ergodicity_constants(big)


def test_stationary_examples():
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert stationary_direct(flip) == pytest.approx([0.5, 0.5])
    assert stationary_distribution(flip) == pytest.approx([0.5, 0.5])
    assert stationary_distribution(np.full((3, 3), 1 / 3)) == pytest.approx(np.full(3, 1 / 3))
    nu = stationary_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]))
    assert nu == pytest.approx([5 / 6, 1 / 6], abs=1e-11)
    with pytest.raises(OracleError, match="stationary_direct"):
        stationary_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]), max_sweeps=2)
    # Chain induced by a policy on an instance.
    p = np.array([[[0.9, 0.1], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]])
    inst = DmdpInstance(p, np.zeros((2, 2)), 0.9)
    nu = stationary_distribution(inst, RandomizedPolicy.deterministic([0, 1], 2))
    assert nu == pytest.approx([5 / 6, 1 / 6], abs=1e-11)


def test_ergodicity_examples():
    uniform = DmdpInstance(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 0.9)
    rep = ergodicity_constants(uniform)
    assert rep.c1 == pytest.approx(1.0) and rep.c2 == pytest.approx(1.0)
    assert rep.label == "deterministic-policy estimate"
    p = np.array([[[0.9, 0.1], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]])
    rep = ergodicity_constants(DmdpInstance(p, np.zeros((2, 2)), 0.9))
    assert rep.c1 == pytest.approx(1 / 3) and rep.c2 == pytest.approx(5 / 3)
    assert np.allclose(rep.stationary.sum(axis=1), 1.0, atol=1e-9)
    single = DmdpInstance(np.array([[[0.9, 0.1]], [[0.5, 0.5]]]), np.zeros((2, 1)), 0.9)
    rep = ergodicity_constants(single)
    assert rep.c1 == pytest.approx(1 / 3) and rep.c2 == pytest.approx(5 / 3)


def test_ergodicity_rejects_reducible_chain():
    with pytest.raises(OracleError, match="non-ergodic"):
        ergodicity_constants(make_e2())


def test_ergodic_mixed_instances_pass():
    for seed in range(3):
        rep = ergodicity_constants(gen_instance(4, 3, 0.9, seed=seed))
        assert 0 < rep.c1 <= rep.c2


@pytest.mark.parametrize("seed", range(5))
def test_occupancy_dual_closes_the_gap(seed):
    inst = gen_instance(4, 2, 0.9, seed=seed)
    sol = brute_force_optimal(inst)
    mu = occupancy_dual(inst, sol.optimal_policy)
    assert mu.sum() == pytest.approx(1.0)
    assert duality_gap(inst, sol.v_star, DualVariable(mu, 0.1, np.full(4, 0.25))) <= 1e-8
