import numpy as np
import pytest
from conftest import make_e2, make_single

from pdmdp.evaluation import InstanceSampler, eval_config, exact_value, mc_evaluate
from pdmdp.instances import gen_instance
from pdmdp.meta import MetaConfig, meta_solve, trial_count
from pdmdp.model import SaddleConfig
from pdmdp.solver import run, schedule_from


def test_trial_count_examples():
    assert trial_count(0.05) == 4
    assert trial_count(2 / 3) == 1
    assert trial_count(0.5) == 2
    assert trial_count(0.1) == 3
    with pytest.raises(ValueError):
        trial_count(0.0)


def test_single_state_returns_unique_policy():
    inst = make_single()
    pol, report = meta_solve(inst, MetaConfig(0.1, 0.05, iters=50), SaddleConfig.general(1, 0.9))
    assert pol.rows.tolist() == [[1.0]]
    assert len(report.trials) == 4


def test_one_trial_is_run_plus_evaluation():
    inst = gen_instance(4, 3, 0.9, seed=1)
    saddle = SaddleConfig.general(4, 0.9)
    cfg = MetaConfig(0.2, 0.1, trials=1, base_seed=5, iters=5000)
    pol, report = meta_solve(inst, cfg, saddle)
    sched = schedule_from(inst, saddle, 0.1, T_override=5000)
    direct = run(inst, sched, 5, trial=0).averaged_policy
    assert np.array_equal(pol.rows, direct.rows)
    value = mc_evaluate(InstanceSampler(inst), direct, saddle.q, eval_config(0.1, 0.05, 0.9), 5, trial=0)
    assert report.best_value == value


def test_report_and_selection():
    inst = gen_instance(4, 3, 0.9, seed=2)
    saddle = SaddleConfig.general(4, 0.9)
    cfg = MetaConfig(0.2, 0.1, base_seed=3, iters=3000)
    pol, report = meta_solve(inst, cfg, saddle)
    values = [r.value for r in report.trials]
    assert [r.trial for r in report.trials] == [0, 1, 2]
    assert report.best_value == max(values)
    assert report.best == values.index(max(values))
    assert np.array_equal(pol.rows, report.trials[report.best].result.averaged_policy.rows)
    assert report.eval_horizon == eval_config(0.1, 0.1 / 6, 0.9).horizon
    parallel_pol, parallel = meta_solve(inst, MetaConfig(0.2, 0.1, base_seed=3, iters=3000, workers=3), saddle)
    assert [r.value for r in parallel.trials] == values
    assert np.array_equal(parallel_pol.rows, pol.rows)


def test_e2_end_to_end():
    e2 = make_e2()
    saddle = SaddleConfig.general(2, 0.5)
    pol, report = meta_solve(e2, MetaConfig(0.1, 0.05, base_seed=7), saddle)
    assert len(report.trials) == 4
    assert float(saddle.q @ exact_value(e2, pol)) >= 1.5 - 0.1
