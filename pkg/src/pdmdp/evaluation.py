"""Policy evaluation: truncated Monte-Carlo rollouts and exact linear solves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import rng as rngmod
from .model import DmdpInstance, RandomizedPolicy
from .oracles import solve_policy_value
from .solver import sampler_nodes
from .trees import build_node_rows, build_nodes, descend

_BATCH = 1 << 15


@dataclass(frozen=True)
class EvalConfig:
    epsilon: float
    delta: float
    horizon: int
    repeats: int


def eval_config(epsilon: float, delta: float, gamma: float) -> EvalConfig:
    """Horizon ``n`` with ``gamma^n / (1 - gamma) <= eps / 2`` and a Hoeffding
    repeat count for deviation ``eps / 2`` on returns in ``[0, 1/(1-gamma)]``."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    n = max(1, math.ceil(math.log(epsilon * (1 - gamma) / 2) / math.log(gamma)))
    k = math.ceil(8 * math.log(2 / delta) / (epsilon**2 * (1 - gamma) ** 2))
    return EvalConfig(epsilon, delta, n, k)


class InstanceSampler:
    """Next-state trees and per-transition rewards of an instance."""

    def __init__(self, inst: DmdpInstance):
        self.inst = inst
        self.trans_nodes = np.ascontiguousarray(sampler_nodes(inst))
        self.rewards = inst.transition_rewards()
        self.gamma = inst.discount


@numba.njit(cache=True, nogil=True)
def _rollouts(U, trans, R, pol, qn, gamma, out):
    n = (U.shape[1] - 1) // 2
    for b in range(U.shape[0]):
        i = descend(qn, U[b, 0])[0]
        y = 0.0
        disc = 1.0
        for t in range(n):
            a = descend(pol[i], U[b, 1 + 2 * t])[0]
            j = descend(trans[i, a], U[b, 2 + 2 * t])[0]
            y += disc * R[i, a, j]
            disc *= gamma
            i = j
        out[b] = y


def _policy_nodes(sampler: InstanceSampler, pol: RandomizedPolicy) -> np.ndarray:
    if pol.rows.shape != (sampler.inst.num_states, sampler.inst.num_actions):
        raise ValueError("policy shape does not match the instance")
    return build_node_rows(pol.rows)


def rollout(sampler: InstanceSampler, pol: RandomizedPolicy, q, n: int, rng: np.random.Generator) -> float:
    """Discounted return of one ``n``-transition trajectory started from ``q``."""
    out = np.empty(1)
    U = rng.random((1, 2 * n + 1))
    _rollouts(U, sampler.trans_nodes, sampler.rewards, _policy_nodes(sampler, pol), build_nodes(q), sampler.gamma, out)
    return float(out[0])


def mc_evaluate(
    sampler: InstanceSampler,
    pol: RandomizedPolicy,
    q,
    cfg: EvalConfig,
    seed: int,
    trial: int = 0,
) -> float:
    """Mean of ``cfg.repeats`` truncated rollouts.

    With probability at least ``1 - delta`` the result lies in
    ``[q^T v^pi - eps, q^T v^pi]``. Rollouts are drawn in fixed-size batches
    and summed in order, so the value depends only on the inputs and seed.
    """
    rng = rngmod.make_rng(seed, trial, rngmod.EVALUATE)
    pol_nodes = _policy_nodes(sampler, pol)
    q_nodes = build_nodes(q)
    width = 2 * cfg.horizon + 1
    total = 0.0
    left = cfg.repeats
    out = np.empty(_BATCH)
    while left > 0:
        m = min(left, _BATCH)
        U = rng.random((m, width))
        _rollouts(U, sampler.trans_nodes, sampler.rewards, pol_nodes, q_nodes, sampler.gamma, out[:m])
        total += math.fsum(out[:m])
        left -= m
    return total / cfg.repeats


def exact_value(inst: DmdpInstance, pol: RandomizedPolicy) -> np.ndarray:
    """``v^pi`` from ``(I - gamma P^pi) v = r^pi`` (dense, |S| <= 4096)."""
    return solve_policy_value(inst, pol)
