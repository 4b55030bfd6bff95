"""Discounted MDP data model, Bellman operators and LP-duality quantities.

Values follow the Bellman-equation convention ``v = r + gamma * P v``, so a
single state with unit reward has value ``1 / (1 - gamma)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TOL = 1e-9


class ModelError(ValueError):
    """Raised when an instance, policy or dual variable is malformed."""


@dataclass(frozen=True, eq=False)
class DmdpInstance:
    """The tuple ``(S, A, P, r, gamma)``.

    ``transitions[i, a, j]`` is ``p_ij(a)``. ``rewards`` is either expected-form
    with shape ``(S, A)`` holding ``r_a(i)``, or full-form with shape
    ``(S, A, S)`` holding ``r_ij(a)``.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float
    # Optional pre-built next-state sum trees, shape (S, A, 2L-1).
    transition_nodes: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.transitions, dtype=np.float64)
        r = np.asarray(self.rewards, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise ModelError(f"transitions must have shape (S, A, S), got {p.shape}")
        if r.shape not in (p.shape[:2], p.shape):
            raise ModelError(f"rewards shape {r.shape} does not match transitions {p.shape}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def reward_kind(self) -> str:
        return "expected" if self.rewards.ndim == 2 else "full"

    def expected_rewards(self) -> np.ndarray:
        """``r_a(i)`` for every pair, shape ``(S, A)``."""
        if self.rewards.ndim == 2:
            return self.rewards
        return np.einsum("iaj,iaj->ia", self.transitions, self.rewards)

    def transition_rewards(self) -> np.ndarray:
        """``r_ij(a)`` with shape ``(S, A, S)``; expected-form rewards are
        broadcast over the next state."""
        if self.rewards.ndim == 3:
            return self.rewards
        return np.ascontiguousarray(
            np.broadcast_to(self.rewards[:, :, None], self.transitions.shape)
        )

    def with_nodes(self, nodes: Optional[np.ndarray]) -> "DmdpInstance":
        return DmdpInstance(self.transitions, self.rewards, self.discount, nodes)

    def same_data(self, other: "DmdpInstance") -> bool:
        return (
            self.discount == other.discount
            and np.array_equal(self.transitions, other.transitions)
            and self.rewards.shape == other.rewards.shape
            and np.array_equal(self.rewards, other.rewards)
        )


@dataclass(frozen=True, eq=False)
class RandomizedPolicy:
    """Per-state action distributions, ``rows[i, a] = pi_i(a)``."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ModelError(f"policy rows must be a 2-d array, got shape {rows.shape}")
        if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > TOL):
            raise ModelError("policy rows must be nonnegative and sum to 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "RandomizedPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "RandomizedPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        rows = np.zeros((actions.size, num_actions))
        rows[np.arange(actions.size), actions] = 1.0
        return cls(rows)

    @property
    def shape(self):
        return self.rows.shape


@dataclass(frozen=True, eq=False)
class DualVariable:
    """``entries[i, a] = mu_{i,a}`` together with the ``(theta, q)`` of the
    information set it is meant to live in."""

    entries: np.ndarray
    theta: float
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=np.float64))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class SaddleConfig:
    """Dual information-set parameters ``theta`` and ``q``.

    ``c1``/``c2`` are only meaningful in ergodic mode, where
    ``theta = 1 - gamma + gamma * c1 / c2``.
    """

    theta: float
    q: np.ndarray
    mode: str = "general"
    c1: Optional[float] = None
    c2: Optional[float] = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1 or np.any(q <= 0) or abs(q.sum() - 1.0) > TOL:
            raise ModelError("q must be a strictly positive probability vector")
        if self.mode not in ("general", "ergodic"):
            raise ModelError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ModelError(f"theta must lie in [0, 1], got {self.theta}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def general(cls, num_states: int, discount: float) -> "SaddleConfig":
        return cls(1.0 - discount, np.full(num_states, 1.0 / num_states), "general")

    @classmethod
    def ergodic(cls, discount: float, c1: float, c2: float, q=None, num_states=None) -> "SaddleConfig":
        if not 0 < c1 <= c2:
            raise ModelError(f"need 0 < c1 <= c2, got c1={c1}, c2={c2}")
        if q is None:
            q = np.full(num_states, 1.0 / num_states)
        theta = 1.0 - discount + discount * c1 / c2
        return cls(min(theta, 1.0), q, "ergodic", c1, c2)


def validate_instance(inst: DmdpInstance) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    report = []
    gamma = inst.discount
    if not 0.0 < gamma < 1.0:
        report.append(f"discount {gamma:g} not in (0,1)")
    p = inst.transitions
    for i, a, j in zip(*np.nonzero(p < 0)):
        report.append(f"negative probability {float(p[i, a, j])!r} at ({i},{a},{j})")
    sums = p.sum(axis=2)
    for i, a in zip(*np.nonzero(np.abs(sums - 1.0) > TOL)):
        report.append(f"row sum {float(sums[i, a])!r} != 1 at ({i},{a})")
    r = inst.rewards
    for idx in zip(*np.nonzero((r < 0) | (r > 1) | ~np.isfinite(r))):
        report.append(f"reward {float(r[idx])!r} not in [0,1] at {tuple(int(k) for k in idx)}")
    return report


def expected_reward(inst: DmdpInstance, i: int, a: int) -> float:
    if not (0 <= i < inst.num_states and 0 <= a < inst.num_actions):
        raise IndexError(f"pair ({i},{a}) out of range")
    if inst.rewards.ndim == 2:
        return float(inst.rewards[i, a])
    return float(inst.transitions[i, a] @ inst.rewards[i, a])


def q_values(inst: DmdpInstance, v: np.ndarray) -> np.ndarray:
    """``r_a(i) + gamma * sum_j p_ij(a) v_j`` with shape ``(S, A)``."""
    return inst.expected_rewards() + inst.discount * (inst.transitions @ np.asarray(v, dtype=np.float64))


def greedy_actions(q: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Smallest action index attaining the row maximum (within ``tol``)."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tol, axis=1)


def bellman_backup(inst: DmdpInstance, v) -> tuple[np.ndarray, np.ndarray]:
    """Apply the Bellman operator; returns ``(Tv, greedy actions)``."""
    q = q_values(inst, v)
    return q.max(axis=1), greedy_actions(q)


def policy_transition(inst: DmdpInstance, pol: RandomizedPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Markov chain ``P^pi`` and reward vector ``r^pi`` induced by ``pol``."""
    if pol.rows.shape != (inst.num_states, inst.num_actions):
        raise ModelError(
            f"policy shape {pol.rows.shape} does not match instance "
            f"({inst.num_states}, {inst.num_actions})"
        )
    p_pi = np.einsum("ia,iaj->ij", pol.rows, inst.transitions)
    r_pi = np.einsum("ia,ia->i", pol.rows, inst.expected_rewards())
    return p_pi, r_pi


def residuals(inst: DmdpInstance, v) -> np.ndarray:
    """LP primal slack ``v_i - gamma (P_a v)_i - r_a(i)`` per pair."""
    v = np.asarray(v, dtype=np.float64)
    return v[:, None] - q_values(inst, v)


def duality_gap(inst: DmdpInstance, v_star, mu: DualVariable) -> float:
    """Weighted complementarity violation ``sum mu_{i,a} * residual_{i,a}(v*)``."""
    gap = float(np.sum(mu.entries * residuals(inst, v_star)))
    if gap < -TOL:
        raise ModelError(f"duality gap {gap!r} is negative; v_star is not optimal")
    return gap


def dual_to_policy(mu: DualVariable) -> RandomizedPolicy:
    mass = mu.entries.sum(axis=1)
    empty = np.nonzero(mass <= 0)[0]
    if empty.size:
        raise ModelError(f"dual variable has zero mass at state {int(empty[0])}")
    return RandomizedPolicy(mu.entries / mass[:, None])


def check_dual_feasible(mu: DualVariable, tol: float = TOL) -> bool:
    """Membership in ``{e^T mu = 1, mu >= 0, sum_a mu_a >= theta q}``."""
    m = mu.entries
    if np.any(m < -tol):
        return False
    if abs(m.sum() - 1.0) > tol:
        return False
    return bool(np.all(m.sum(axis=1) >= mu.theta * mu.q - tol))


def assemble_dual(xi, pol: RandomizedPolicy, cfg: SaddleConfig) -> DualVariable:
    """``mu_{i,a} = ((1 - theta) xi_i + theta q_i) pi_{i,a}``."""
    xi = np.asarray(xi, dtype=np.float64)
    weight = (1.0 - cfg.theta) * xi + cfg.theta * cfg.q
    return DualVariable(weight[:, None] * pol.rows, cfg.theta, cfg.q)
