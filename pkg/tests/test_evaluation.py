import math

import numpy as np
import pytest
from conftest import make_e2, make_single

from pdmdp import rng as rngmod
from pdmdp.evaluation import InstanceSampler, eval_config, exact_value, mc_evaluate, rollout
from pdmdp.model import DmdpInstance, RandomizedPolicy


def test_eval_config_examples():
    assert eval_config(0.1, 0.05, 0.9).horizon == 51
    assert eval_config(0.2, 0.05, 0.9).repeats == 73_778
    # ceil(ln(0.5 * 0.9 / 2) / ln 0.1) = 1; the tail 0.1 / 0.9 is already <= 0.25.
    assert eval_config(0.5, 0.05, 0.1).horizon == 1
    for eps, gamma in [(0.1, 0.9), (0.5, 0.1), (0.05, 0.99), (0.3, 0.5)]:
        n = eval_config(eps, 0.1, gamma).horizon
        assert gamma**n / (1 - gamma) <= eps / 2 < gamma ** (n - 1) / (1 - gamma)
    with pytest.raises(ValueError):
        eval_config(0.0, 0.1, 0.9)
    with pytest.raises(ValueError):
        eval_config(0.1, 1.0, 0.9)


def test_rollout_single_state():
    inst = make_single()
    y = rollout(InstanceSampler(inst), RandomizedPolicy.uniform(1, 1), np.ones(1), 51, rngmod.make_rng(0))
    assert y == pytest.approx((1 - 0.9**51) / 0.1, rel=1e-14)
    assert y == pytest.approx(9.95362, abs=1e-5)


def test_rollout_zero_rewards_and_one_step():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(3), size=(3, 2))
    zero = DmdpInstance(p, np.zeros((3, 2)), 0.9)
    pol = RandomizedPolicy.uniform(3, 2)
    assert rollout(InstanceSampler(zero), pol, np.full(3, 1 / 3), 20, rngmod.make_rng(1)) == 0.0
    # One transition: the return is the reward of the single sampled pair.
    r = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    inst = DmdpInstance(p, r, 0.9)
    values = {rollout(InstanceSampler(inst), pol, np.full(3, 1 / 3), 1, rngmod.make_rng(s)) for s in range(50)}
    assert values <= set(r.ravel().tolist())


def test_mc_evaluate_single_state_is_exact():
    inst = make_single()
    cfg = eval_config(0.1, 0.05, 0.9)
    y = mc_evaluate(InstanceSampler(inst), RandomizedPolicy.uniform(1, 1), np.ones(1), cfg, 0)
    assert y == pytest.approx((1 - 0.9**51) / 0.1, rel=1e-12)


def test_mc_evaluate_e2_stay_policy():
    e2 = make_e2()
    cfg = eval_config(0.1, 0.05, 0.5)
    y = mc_evaluate(InstanceSampler(e2), RandomizedPolicy.deterministic([0, 0], 2), np.array([1.0, 0.0]), cfg, 3)
    assert -0.1 <= y <= 0.0


def test_mc_evaluate_e2_uniform_coverage():
    e2 = make_e2()
    pol = RandomizedPolicy.uniform(2, 2)
    q = np.full(2, 0.5)
    target = float(q @ exact_value(e2, pol))
    assert target == pytest.approx(4 / 3, abs=1e-14)
    cfg = eval_config(0.1, 0.05, 0.5)
    sampler = InstanceSampler(e2)
    hits = sum(target - 0.1 <= mc_evaluate(sampler, pol, q, cfg, seed) <= target for seed in range(100))
    assert hits >= 95


def test_mc_evaluate_deterministic():
    e2 = make_e2()
    cfg = eval_config(0.2, 0.1, 0.5)
    pol = RandomizedPolicy.uniform(2, 2)
    a = mc_evaluate(InstanceSampler(e2), pol, np.full(2, 0.5), cfg, 5, trial=2)
    b = mc_evaluate(InstanceSampler(e2), pol, np.full(2, 0.5), cfg, 5, trial=2)
    c = mc_evaluate(InstanceSampler(e2), pol, np.full(2, 0.5), cfg, 5, trial=3)
    assert a == b and a != c


def test_exact_value_examples():
    assert exact_value(make_single(), RandomizedPolicy.uniform(1, 1)) == pytest.approx([10.0], abs=1e-12)
    e2 = make_e2()
    assert exact_value(e2, RandomizedPolicy.deterministic([1, 0], 2)) == pytest.approx([1.0, 2.0], abs=1e-12)
    assert exact_value(e2, RandomizedPolicy.deterministic([1, 1], 2)) == pytest.approx([1.0, 2.0], abs=1e-12)
    v = exact_value(e2, RandomizedPolicy.uniform(2, 2))
    assert v == pytest.approx([2 / 3, 2.0], abs=1e-12)
    assert math.isclose(v[0], 0.25 * v[0] + 0.5, abs_tol=1e-14)


def test_policy_shape_checked():
    with pytest.raises(ValueError):
        rollout(InstanceSampler(make_e2()), RandomizedPolicy.uniform(3, 2), np.full(2, 0.5), 3, rngmod.make_rng(0))
