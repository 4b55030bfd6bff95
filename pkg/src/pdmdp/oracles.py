"""Exact ground truth: enumeration, value/policy iteration, stationary laws."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import DmdpInstance, RandomizedPolicy, bellman_backup, greedy_actions, policy_transition, q_values

ENUMERATION_GUARD = 10**6
DENSE_GUARD = 4096
_BATCH = 4096


class GuardExceeded(ValueError):
    """The problem is too large for an exact method."""


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OracleSolution:
    v_star: np.ndarray
    optimal_policy: np.ndarray
    method: str
    rounds: int = 0

    def bellman_residual(self, inst: DmdpInstance) -> float:
        return float(np.max(np.abs(bellman_backup(inst, self.v_star)[0] - self.v_star)))


@dataclass(frozen=True, eq=False)
class ErgodicityReport:
    stationary: np.ndarray  # (num deterministic policies, S)
    c1: float
    c2: float
    label: str = "deterministic-policy estimate"


def solve_policy_value(inst: DmdpInstance, pol: RandomizedPolicy, tol: float = 1e-10) -> np.ndarray:
    """Solve ``(I - gamma P^pi) v = r^pi`` with LU and iterative refinement."""
    s = inst.num_states
    if s > DENSE_GUARD:
        raise GuardExceeded(f"|S|={s} exceeds the dense-solve guard {DENSE_GUARD}")
    p_pi, r_pi = policy_transition(inst, pol)
    a = np.eye(s) - inst.discount * p_pi
    v = np.linalg.solve(a, r_pi)
    for _ in range(5):
        res = r_pi - a @ v
        if np.max(np.abs(res)) <= tol:
            break
        v = v + np.linalg.solve(a, res)
    return v


def _policy_batches(num_states: int, num_actions: int):
    """Deterministic policies in lexicographic order (state 0 most significant)."""
    it = itertools.product(range(num_actions), repeat=num_states)
    while True:
        chunk = list(itertools.islice(it, _BATCH))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def _check_enumeration(inst: DmdpInstance) -> int:
    count = inst.num_actions**inst.num_states
    if count > ENUMERATION_GUARD:
        raise GuardExceeded(
            f"|A|^|S| = {inst.num_actions}^{inst.num_states} policies exceeds the guard {ENUMERATION_GUARD}"
        )
    return count


def _batch_chains(inst: DmdpInstance, actions: np.ndarray):
    states = np.arange(inst.num_states)
    p = inst.transitions[states, actions]  # (B, S, S)
    r = inst.expected_rewards()[states, actions]  # (B, S)
    return p, r


def brute_force_optimal(inst: DmdpInstance) -> OracleSolution:
    """Evaluate every deterministic policy exactly and keep the best.

    The policy maximising the uniform average of its values is optimal at
    every state; ties go to the lowest policy index.
    """
    _check_enumeration(inst)
    s = inst.num_states
    eye = np.eye(s)
    best_val, best_actions, best_v = -np.inf, None, None
    for actions in _policy_batches(s, inst.num_actions):
        p, r = _batch_chains(inst, actions)
        v = np.linalg.solve(eye - inst.discount * p, r[..., None])[..., 0]
        score = v.mean(axis=1)
        k = int(np.argmax(score >= score.max() - 1e-12 * max(1.0, abs(score.max()))))
        if best_actions is None or score[k] > best_val + 1e-12 * max(1.0, abs(best_val)):
            best_val, best_actions, best_v = score[k], actions[k].copy(), v[k].copy()
    pol = RandomizedPolicy.deterministic(best_actions, inst.num_actions)
    v_star = solve_policy_value(inst, pol)
    sol = OracleSolution(v_star, best_actions, "enumeration")
    resid = sol.bellman_residual(inst)
    if resid > 1e-9:
        raise OracleError(f"enumerated optimum has Bellman residual {resid:.3e}")
    return sol


def value_iteration(inst: DmdpInstance, tol: float = 1e-8, v0=None, max_sweeps: int = 10**7) -> OracleSolution:
    """Iterate ``v <- Tv`` until successive iterates are within
    ``tol (1 - gamma) / gamma``, which puts ``v`` within ``tol`` of ``v*``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    gamma = inst.discount
    stop = tol * (1 - gamma) / gamma
    v = np.zeros(inst.num_states) if v0 is None else np.asarray(v0, dtype=np.float64)
    for sweep in range(1, max_sweeps + 1):
        v_new, _ = bellman_backup(inst, v)
        diff = np.max(np.abs(v_new - v))
        v = v_new
        if diff <= stop:
            break
    else:
        raise OracleError("value iteration did not converge")
    return OracleSolution(v, greedy_actions(q_values(inst, v), 1e-12), "value_iteration", sweep)


def policy_iteration(inst: DmdpInstance, initial=None, max_rounds: int = 10**4) -> OracleSolution:
    """Howard's policy iteration from the all-zero-action policy."""
    n_a = inst.num_actions
    actions = np.zeros(inst.num_states, dtype=np.int64) if initial is None else np.asarray(initial)
    for rounds in range(1, max_rounds + 1):
        v = solve_policy_value(inst, RandomizedPolicy.deterministic(actions, n_a))
        q = q_values(inst, v)
        new = greedy_actions(q, 1e-12)
        # Keep the incumbent on (numerical) ties so the loop cannot cycle.
        keep = q[np.arange(q.shape[0]), actions] >= q.max(axis=1) - 1e-12
        new = np.where(keep, actions, new)
        if np.array_equal(new, actions):
            return OracleSolution(v, actions, "policy_iteration", rounds)
        actions = new
    raise OracleError("policy iteration did not terminate")


def stationary_direct(p: np.ndarray) -> np.ndarray:
    """Solve ``nu = P^T nu``, ``sum(nu) = 1`` directly (one balance equation
    replaced by the normalisation)."""
    p = np.asarray(p, dtype=np.float64)
    s = p.shape[0]
    a = np.eye(s) - p.T
    a[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    try:
        nu = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise OracleError("chain has no unique stationary distribution") from exc
    return nu


def stationary_distribution(chain, pol: RandomizedPolicy | None = None, tol: float = 1e-12, max_sweeps: int = 10**6) -> np.ndarray:
    """Stationary law by power iteration.

    ``chain`` is a row-stochastic matrix, or an instance when ``pol`` is given
    (the chain is then ``P^pol``). Falls back to the lazy chain ``(I + P) / 2``
    (same stationary law, always aperiodic) when plain power iteration stalls,
    e.g. on periodic chains.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if pol is not None:
        chain = policy_transition(chain, pol)[0]
    p = np.asarray(chain, dtype=np.float64)
    s = p.shape[0]
    for chain in (p, 0.5 * (np.eye(s) + p)):
        nu = np.full(s, 1.0 / s)
        pt = chain.T
        for _ in range(max_sweeps):
            nxt = pt @ nu
            nxt /= nxt.sum()
            if np.abs(p.T @ nxt - nxt).sum() <= tol:
                return nxt
            nu = nxt
    raise OracleError(
        "power iteration did not converge; use stationary_direct for periodic or slowly mixing chains"
    )


def ergodicity_constants(inst: DmdpInstance, q=None) -> ErgodicityReport:
    """Extreme ratios ``nu^pi_i / q_i`` over all deterministic policies."""
    _check_enumeration(inst)
    s = inst.num_states
    q = np.full(s, 1.0 / s) if q is None else np.asarray(q, dtype=np.float64)
    rhs = np.zeros(s)
    rhs[-1] = 1.0
    out = []
    for actions in _policy_batches(s, inst.num_actions):
        p, _ = _batch_chains(inst, actions)
        a = np.eye(s) - np.swapaxes(p, 1, 2)
        a[:, -1, :] = 1.0
        try:
            nu = np.linalg.solve(a, np.broadcast_to(rhs, (len(actions), s))[..., None])[..., 0]
        except np.linalg.LinAlgError:
            for row, act in zip(a, actions):
                if np.linalg.matrix_rank(row) < s:
                    raise OracleError(f"policy {act.tolist()} induces a non-ergodic chain") from None
            raise
        bad = np.nonzero(np.any(nu <= 1e-14, axis=1))[0]
        if bad.size:
            raise OracleError(f"policy {actions[bad[0]].tolist()} induces a non-ergodic chain")
        out.append(nu)
    nus = np.concatenate(out)
    ratios = nus / q
    return ErgodicityReport(nus, float(ratios.min()), float(ratios.max()))


def occupancy_dual(inst: DmdpInstance, actions, q=None) -> np.ndarray:
    """Normalised discounted state-action occupancy of a deterministic policy:
    ``sum_a mu_a = (1 - gamma) (I - gamma P^T)^{-1} q``."""
    s = inst.num_states
    q = np.full(s, 1.0 / s) if q is None else np.asarray(q, dtype=np.float64)
    actions = np.asarray(actions)
    p = inst.transitions[np.arange(s), actions]
    mass = np.linalg.solve(np.eye(s) - inst.discount * p.T, (1 - inst.discount) * q)
    mu = np.zeros((s, inst.num_actions))
    mu[np.arange(s), actions] = mass
    return mu
