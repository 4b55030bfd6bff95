"""Randomized primal-dual iteration for discounted MDPs.

Each iteration samples a state from the mixture ``(1 - theta) xi + theta q``,
an action from the current randomized policy and a next state from the
transition row, then takes a clipped gradient step on two value
coordinates and a multiplicative-weights step on the implicit dual
variable ``mu_{i,a} = ((1 - theta) xi_i + theta q_i) pi_{i,a}``.

``xi`` and every ``pi_i`` are held as unnormalised weights in sum trees;
their roots are the normalising constants. The running average of the
policy iterates is kept lazily: the running sum of row ``i`` is
``g_i * w_i + d_i`` where ``w_i`` are the current leaf weights, which costs
O(1) per iteration and O(|S||A|) to materialise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from . import rng as rngmod
from .model import (
    DmdpInstance,
    DualVariable,
    ModelError,
    RandomizedPolicy,
    SaddleConfig,
    duality_gap,
)
from .trees import build_node_rows, build_nodes, descend, leaf_count, scale_nodes, set_leaf

DELTA_FLOOR = -700.0
DEFAULT_RESCALE = 1e-100
# Rounding slack allowed on the (provably nonpositive) numerator of delta.
_NUMERATOR_SLACK = 1e-12

_OK, _POSITIVE_DELTA, _NONFINITE = 0, 1, 2


class SolverError(RuntimeError):
    """Numeric failure inside the iteration."""


@dataclass(frozen=True, eq=False)
class SolverSchedule:
    T: int
    beta: float
    alpha: float
    M: float
    theta: float
    q: np.ndarray
    c_T: float = 1.0
    rescale_threshold: float = DEFAULT_RESCALE
    epsilon: Optional[float] = None
    mode: str = "general"

    def describe(self) -> str:
        return (
            f"T={self.T} beta={self.beta:.17g} alpha={self.alpha:.17g} M={self.M:.17g} "
            f"theta={self.theta:.17g} c_T={self.c_T:.17g} mode={self.mode}"
        )


def theoretical_iterations(inst: DmdpInstance, cfg: SaddleConfig, epsilon: float) -> float:
    """Iteration count of the complexity bound before the ``c_T`` multiplier.

    General mode: ``|S|^3 |A| log(|S||A|) / ((1-gamma)^6 eps^2)``.
    Ergodic mode: ``(c2/c1)^4 |S| |A| log(|S||A|) / ((1-gamma)^4 eps^2)``.
    """
    s, a, gamma = inst.num_states, inst.num_actions, inst.discount
    log_sa = math.log(s * a)
    if cfg.mode == "ergodic":
        if cfg.c1 is None or cfg.c2 is None:
            raise ModelError("ergodic mode needs c1 and c2")
        ratio = cfg.c2 / cfg.c1
        return ratio**4 * s * a * log_sa / ((1 - gamma) ** 4 * epsilon**2)
    return s**3 * a * log_sa / ((1 - gamma) ** 6 * epsilon**2)


def step_sizes(num_states: int, num_actions: int, gamma: float, T: int) -> tuple[float, float, float]:
    """``(beta, alpha, M)`` for a horizon of ``T`` iterations."""
    sa = num_states * num_actions
    beta = (1 - gamma) * math.sqrt(math.log(sa + 1) / (2 * sa * max(T, 1)))
    alpha = num_states / (2 * (1 - gamma) ** 2) * beta
    return beta, alpha, 1.0 / (1.0 - gamma)


def schedule_from(
    inst: DmdpInstance,
    cfg: SaddleConfig,
    epsilon: float,
    c_T: float = 1.0,
    T_override: Optional[int] = None,
    rescale_threshold: float = DEFAULT_RESCALE,
) -> SolverSchedule:
    if not 0.0 < epsilon < 1.0:
        raise ModelError(f"epsilon must lie in (0,1), got {epsilon}")
    if cfg.q.size != inst.num_states:
        raise ModelError("q does not match the number of states")
    if T_override is not None:
        T = int(T_override)
        if T < 0:
            raise ModelError("iteration count must be nonnegative")
    else:
        T = math.ceil(c_T * theoretical_iterations(inst, cfg, epsilon))
    beta, alpha, M = step_sizes(inst.num_states, inst.num_actions, inst.discount, T)
    return SolverSchedule(
        T=T,
        beta=beta,
        alpha=alpha,
        M=M,
        theta=cfg.theta,
        q=cfg.q,
        c_T=c_T,
        rescale_threshold=rescale_threshold,
        epsilon=epsilon,
        mode=cfg.mode,
    )


def fixed_schedule(inst: DmdpInstance, cfg: SaddleConfig, T: int, **kw) -> SolverSchedule:
    """Schedule with an explicit horizon ``T`` (no precision target)."""
    beta, alpha, M = step_sizes(inst.num_states, inst.num_actions, inst.discount, T)
    return SolverSchedule(T=int(T), beta=beta, alpha=alpha, M=M, theta=cfg.theta, q=cfg.q, mode=cfg.mode, **kw)


@numba.njit(cache=True, nogil=True)
def _iterate(U, v, xi, qn, q, pis, trans, R, g, d, tlast, counters, params, trace):
    theta = params[0]
    beta = params[1]
    alpha = params[2]
    gamma = params[3]
    M = params[4]
    threshold = params[5]
    vmax = M
    xi_first = xi.shape[0] // 2
    pi_first = pis.shape[1] // 2
    for k in range(U.shape[0]):
        t = counters[0] + 1
        if U[k, 0] < theta:
            i = descend(qn, U[k, 1])[0]
        else:
            i = descend(xi, U[k, 1])[0]
        row = pis[i]
        Zi = row[0]
        a = descend(row, U[k, 2])[0]
        j = descend(trans[i, a], U[k, 3])[0]
        r = R[i, a, j]

        xi_i = xi[xi_first + i] / xi[0]
        w_old = row[pi_first + a]
        pi_ia = w_old / Zi
        p_i = (1.0 - theta) * xi_i + theta * q[i]
        num = gamma * v[j] - v[i] + r - M
        if num > 0.0:
            if num > _NUMERATOR_SLACK:
                trace[0] = num
                return _POSITIVE_DELTA
            num = 0.0
        delta = beta * num / (p_i * pi_ia)
        if not np.isfinite(delta):
            trace[0] = delta
            return _NONFINITE

        vi = v[i] - alpha * ((1.0 - gamma) * q[i] / p_i - 1.0)
        v[i] = max(min(vi, vmax), 0.0)
        vj = v[j] - alpha * gamma
        v[j] = max(min(vj, vmax), 0.0)

        # Row i held its current value for iterations tlast+1 .. t.
        g[i] += (t - tlast[i]) / Zi
        tlast[i] = t

        if delta < DELTA_FLOOR:
            delta = DELTA_FLOOR
            counters[1] += 1
        e = math.exp(delta)
        w_xi = xi[xi_first + i]
        set_leaf(xi, i, w_xi + w_xi * pi_ia * (e - 1.0))
        w_new = w_old * e
        d[i, a] += g[i] * (w_old - w_new)
        set_leaf(row, a, w_new)

        if row[0] < threshold:
            # Power-of-two factor: exact scaling, so g*w + d is unchanged.
            e2 = math.frexp(row[0])[1]
            scale_nodes(row, math.ldexp(1.0, -e2))
            g[i] = math.ldexp(g[i], e2)
            counters[2] += 1
        if xi[0] < threshold:
            e2 = math.frexp(xi[0])[1]
            scale_nodes(xi, math.ldexp(1.0, -e2))
            counters[2] += 1

        trace[0] = delta
        trace[1] = i
        trace[2] = a
        trace[3] = j
        counters[0] = t
    return _OK


@dataclass(eq=False)
class SolverState:
    """Live iterate of one solver run. Not safe for concurrent use."""

    inst: DmdpInstance
    v: np.ndarray
    xi_nodes: np.ndarray
    q_nodes: np.ndarray
    pi_nodes: np.ndarray
    trans_nodes: np.ndarray
    rewards: np.ndarray
    g: np.ndarray
    d: np.ndarray
    t_last: np.ndarray
    rng: np.random.Generator
    # [iterations done, delta clamps, rescales]
    counters: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    # Last step's delta, i, a, j.
    trace: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @property
    def iter(self) -> int:
        return int(self.counters[0])

    @property
    def clamps(self) -> int:
        return int(self.counters[1])

    @property
    def last_delta(self) -> float:
        return float(self.trace[0])

    def xi(self) -> np.ndarray:
        """Normalised state weights."""
        first = self.xi_nodes.size // 2
        return self.xi_nodes[first : first + self.inst.num_states] / self.xi_nodes[0]

    def policy_weights(self) -> np.ndarray:
        first = self.pi_nodes.shape[1] // 2
        return self.pi_nodes[:, first : first + self.inst.num_actions]

    def policy(self) -> RandomizedPolicy:
        """Current (not averaged) policy iterate."""
        w = self.policy_weights()
        return RandomizedPolicy(w / self.pi_nodes[:, :1])

    def dual(self, theta: float, q: np.ndarray) -> DualVariable:
        weight = (1.0 - theta) * self.xi() + theta * q
        w = self.policy_weights()
        return DualVariable(weight[:, None] * (w / self.pi_nodes[:, :1]), theta, q)


def sampler_nodes(inst: DmdpInstance) -> np.ndarray:
    """Next-state sum trees for every (i, a), shape ``(S, A, 2L-1)``."""
    if inst.transition_nodes is not None:
        return inst.transition_nodes
    return build_node_rows(inst.transitions)


def init_state(inst: DmdpInstance, schedule: SolverSchedule, seed: int, trial: int = 0) -> SolverState:
    s, a = inst.num_states, inst.num_actions
    q = np.asarray(schedule.q, dtype=np.float64)
    if q.size != s:
        raise ModelError("q does not match the number of states")
    trans = sampler_nodes(inst)
    if trans.shape != (s, a, 2 * leaf_count(s) - 1):
        raise ModelError(f"sampler node array has shape {trans.shape}")
    return SolverState(
        inst=inst,
        v=np.zeros(s),
        xi_nodes=build_nodes(np.full(s, 1.0 / s)),
        q_nodes=build_nodes(q),
        pi_nodes=build_node_rows(np.full((s, a), 1.0 / a)),
        trans_nodes=np.ascontiguousarray(trans),
        rewards=inst.transition_rewards(),
        g=np.zeros(s),
        d=np.zeros((s, a)),
        t_last=np.zeros(s, dtype=np.int64),
        rng=rngmod.make_rng(seed, trial, rngmod.SOLVE),
    )


def _params(schedule: SolverSchedule, gamma: float) -> np.ndarray:
    return np.array(
        [schedule.theta, schedule.beta, schedule.alpha, gamma, schedule.M, schedule.rescale_threshold]
    )


def advance(state: SolverState, schedule: SolverSchedule, n: int) -> None:
    """Run ``n`` iterations (drawing four uniforms per iteration)."""
    if state.iter + n > schedule.T:
        raise SolverError(f"cannot run past T={schedule.T} (at {state.iter}, asked for {n})")
    params = _params(schedule, state.inst.discount)
    q = np.asarray(schedule.q, dtype=np.float64)
    block = 1 << 16
    while n > 0:
        m = min(n, block)
        U = state.rng.random((m, 4))
        status = _iterate(
            U, state.v, state.xi_nodes, state.q_nodes, q, state.pi_nodes, state.trans_nodes,
            state.rewards, state.g, state.d, state.t_last, state.counters, params, state.trace,
        )
        if status == _POSITIVE_DELTA:
            raise SolverError(
                f"positive delta numerator {float(state.trace[0])!r} at iteration {state.iter + 1}; "
                "values left the box [0, 1/(1-gamma)] or a reward exceeds 1"
            )
        if status == _NONFINITE:
            raise SolverError(f"non-finite delta {float(state.trace[0])!r} at iteration {state.iter + 1}")
        n -= m


def step(state: SolverState, schedule: SolverSchedule) -> None:
    """One iteration."""
    advance(state, schedule, 1)


def averaged_sums(state: SolverState) -> np.ndarray:
    """Running sum of the normalised policy rows over all iterations so far.

    Reads the lazy ledger without modifying it.
    """
    roots = state.pi_nodes[:, 0]
    g = state.g + (state.iter - state.t_last) / roots
    return g[:, None] * state.policy_weights() + state.d


def averaged_policy(state: SolverState) -> RandomizedPolicy:
    """Mean of the policy iterates ``pi^0 .. pi^(t-1)`` used by the first ``t`` iterations."""
    if state.iter == 0:
        raise SolverError("the average of zero iterates is undefined")
    sums = averaged_sums(state)
    # Each row total equals t up to rounding; dividing by it keeps rows exact.
    return RandomizedPolicy(sums / sums.sum(axis=1, keepdims=True))


@dataclass(eq=False)
class RunResult:
    averaged_policy: RandomizedPolicy
    final_v: np.ndarray
    metrics: list[dict]
    seed: int
    trial: int
    schedule: SolverSchedule
    xi: np.ndarray
    generator: str = rngmod.GENERATOR_NAME

    @property
    def metrics_lines(self) -> list[str]:
        return [format_metrics(m) for m in self.metrics]

    @property
    def empty_average(self) -> bool:
        return self.schedule.T == 0


def _fmt(x) -> str:
    return "na" if x is None else format(float(x), ".17g")


def format_metrics(record: dict) -> str:
    return (
        f"t={record['t']} gap={_fmt(record['gap'])} vmax={_fmt(record['vmax'])} "
        f"xi_entropy={_fmt(record['xi_entropy'])} clamps={record['clamps']}"
    )


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def averaged_dual(state: SolverState, schedule: SolverSchedule) -> DualVariable:
    """Dual assembled from the current ``xi`` and the averaged policy."""
    if state.iter == 0:
        pol = RandomizedPolicy.uniform(state.inst.num_states, state.inst.num_actions).rows
    else:
        pol = averaged_policy(state).rows
    q = np.asarray(schedule.q)
    weight = (1.0 - schedule.theta) * state.xi() + schedule.theta * q
    return DualVariable(weight[:, None] * pol, schedule.theta, q)


def snapshot(state: SolverState, schedule: SolverSchedule, v_star=None) -> dict:
    gap = None
    if v_star is not None:
        gap = duality_gap(state.inst, v_star, averaged_dual(state, schedule))
    return {
        "t": state.iter,
        "gap": gap,
        "vmax": float(state.v.max()),
        "xi_entropy": _entropy(state.xi()),
        "clamps": state.clamps,
    }


def run(
    inst: DmdpInstance,
    schedule: SolverSchedule,
    seed: int,
    metrics_every: Optional[int] = None,
    v_star=None,
    trial: int = 0,
) -> RunResult:
    """Run all ``schedule.T`` iterations and return the averaged policy.

    A metrics record is taken every ``metrics_every`` iterations and at the
    end. With ``T = 0`` the initial uniform policy is returned.
    """
    if metrics_every is not None and metrics_every < 1:
        raise ValueError("metrics_every must be positive")
    state = init_state(inst, schedule, seed, trial)
    metrics = []
    every = metrics_every or max(schedule.T, 1)
    while state.iter < schedule.T:
        n = min(every - state.iter % every, schedule.T - state.iter)
        advance(state, schedule, n)
        if state.iter % every == 0 or state.iter == schedule.T:
            metrics.append(snapshot(state, schedule, v_star))
    if schedule.T == 0:
        metrics.append(snapshot(state, schedule, v_star))
        pol = RandomizedPolicy.uniform(inst.num_states, inst.num_actions)
    else:
        pol = averaged_policy(state)
    return RunResult(
        averaged_policy=pol,
        final_v=state.v.copy(),
        metrics=metrics,
        seed=seed,
        trial=trial,
        schedule=schedule,
        xi=state.xi(),
    )
