"""Best-of-K selection over independent solver trials."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .evaluation import InstanceSampler, eval_config, mc_evaluate
from .model import DmdpInstance, RandomizedPolicy, SaddleConfig
from .solver import RunResult, SolverSchedule, run, sampler_nodes, schedule_from


def trial_count(delta: float) -> int:
    """Smallest ``K`` with ``(1/3)^K <= delta / 2``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    k = 1
    while 3.0**-k > delta / 2:
        k += 1
    return k


@dataclass(frozen=True)
class MetaConfig:
    epsilon: float
    delta: float
    trials: Optional[int] = None
    mode: str = "general"
    base_seed: int = 0
    c_T: float = 1.0
    iters: Optional[int] = None
    metrics_every: Optional[int] = None
    workers: int = 1

    @property
    def K(self) -> int:
        return self.trials if self.trials is not None else trial_count(self.delta)


@dataclass(eq=False)
class TrialRecord:
    trial: int
    seed: int
    value: float
    schedule: SolverSchedule
    result: RunResult = field(repr=False)


@dataclass(eq=False)
class MetaReport:
    trials: list[TrialRecord]
    best: int
    eval_horizon: int
    eval_repeats: int

    @property
    def best_value(self) -> float:
        return self.trials[self.best].value


def meta_solve(
    inst: DmdpInstance,
    cfg: MetaConfig,
    saddle: SaddleConfig,
    v_star=None,
) -> tuple[RandomizedPolicy, MetaReport]:
    """Run ``K`` solver trials at precision ``eps/2``, score each averaged
    policy by Monte-Carlo evaluation at precision ``eps/2`` and failure
    probability ``delta/(2K)``, and return the best-scoring policy.

    Trial ``k`` uses the random streams ``(base_seed, k, *)``; ties in the
    score go to the lowest trial index.
    """
    k_trials = cfg.K
    if k_trials < 1:
        raise ValueError("need at least one trial")
    half = cfg.epsilon / 2
    schedule = schedule_from(inst, saddle, half, cfg.c_T, cfg.iters)
    ecfg = eval_config(half, cfg.delta / (2 * k_trials), inst.discount)
    # Build the next-state trees once and share them read-only across trials.
    shared = inst.with_nodes(sampler_nodes(inst))
    sampler = InstanceSampler(shared)

    def one(k: int) -> TrialRecord:
        res = run(shared, schedule, cfg.base_seed, cfg.metrics_every, v_star, trial=k)
        value = mc_evaluate(sampler, res.averaged_policy, saddle.q, ecfg, cfg.base_seed, trial=k)
        return TrialRecord(k, cfg.base_seed, value, schedule, res)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(one, range(k_trials)))
    else:
        records = [one(k) for k in range(k_trials)]
    values = np.array([r.value for r in records])
    best = int(np.argmax(values))
    report = MetaReport(records, best, ecfg.horizon, ecfg.repeats)
    return records[best].result.averaged_policy, report
