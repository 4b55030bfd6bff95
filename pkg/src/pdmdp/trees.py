"""Binary sum trees for logarithmic-time weighted sampling.

A tree over ``n`` weights is stored as a flat breadth-first array of
``2L - 1`` nodes, root first, where ``L`` is the smallest power of two
``>= n``. Leaf ``k`` lives at node ``L - 1 + k``; padding leaves hold 0.

The node-level routines are compiled with numba so the solver and the
rollout kernels can call them directly on raw arrays.
"""
from __future__ import annotations

import numba
import numpy as np


class TreeError(ValueError):
    pass


def leaf_count(n: int) -> int:
    """Smallest power of two ``>= n``."""
    if n < 1:
        raise TreeError("a tree needs at least one leaf")
    return 1 << (n - 1).bit_length()


@numba.njit(cache=True, nogil=True)
def rebuild_nodes(nodes):
    # Internal node k has children 2k+1 and 2k+2.
    for k in range(nodes.shape[0] // 2 - 1, -1, -1):
        nodes[k] = nodes[2 * k + 1] + nodes[2 * k + 2]


@numba.njit(cache=True, nogil=True)
def descend(nodes, u):
    """Leaf index for uniform ``u`` in [0, 1), plus the number of nodes read.

    Returns ``-1`` when the total is not positive.
    """
    total = nodes[0]
    visits = 1
    if not total > 0.0:
        return -1, visits
    n_internal = nodes.shape[0] // 2
    target = u * total
    k = 0
    while k < n_internal:
        left = 2 * k + 1
        lsum = nodes[left]
        visits += 1
        if target < lsum:
            k = left
        elif nodes[left + 1] > 0.0:
            target -= lsum
            k = left + 1
        else:
            # Rounding left target >= left sum with an empty right subtree:
            # stay left, heading for its last positive leaf.
            k = left
    return k - n_internal, visits


@numba.njit(cache=True, nogil=True)
def set_leaf(nodes, index, weight):
    """Write one leaf and recompute its ancestors from their children.

    Returns the number of nodes touched.
    """
    k = nodes.shape[0] // 2 + index
    nodes[k] = weight
    touched = 1
    while k > 0:
        k = (k - 1) // 2
        nodes[k] = nodes[2 * k + 1] + nodes[2 * k + 2]
        touched += 2
    return touched


@numba.njit(cache=True, nogil=True)
def scale_nodes(nodes, factor):
    first_leaf = nodes.shape[0] // 2
    for k in range(first_leaf, nodes.shape[0]):
        nodes[k] *= factor
    rebuild_nodes(nodes)


@numba.njit(cache=True, nogil=True)
def descend_many(nodes, us, out):
    for k in range(us.shape[0]):
        out[k] = descend(nodes, us[k])[0]


def build_nodes(weights) -> np.ndarray:
    """Node array for ``weights``; raises on a negative weight."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise TreeError("weights must be one-dimensional")
    neg = np.nonzero(~(w >= 0))[0]
    if neg.size:
        raise TreeError(f"negative weight {float(w[neg[0]])!r} at index {int(neg[0])}")
    n_leaves = leaf_count(w.size)
    nodes = np.zeros(2 * n_leaves - 1)
    nodes[n_leaves - 1 : n_leaves - 1 + w.size] = w
    rebuild_nodes(nodes)
    return nodes


def build_node_rows(rows) -> np.ndarray:
    """Stack of node arrays, one per row of a 2-d (or higher) weight array.

    The last axis indexes leaves; the output replaces it by the node axis.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if np.any(~(rows >= 0)):
        raise TreeError("negative weight in row")
    n = rows.shape[-1]
    n_leaves = leaf_count(n)
    out = np.zeros(rows.shape[:-1] + (2 * n_leaves - 1,))
    out[..., n_leaves - 1 : n_leaves - 1 + n] = rows
    # Level by level keeps this vectorised and bitwise equal to rebuild_nodes.
    width = n_leaves // 2
    while width >= 1:
        start = width - 1
        children = out[..., 2 * start + 1 : 2 * start + 1 + 2 * width]
        out[..., start : start + width] = children[..., 0::2] + children[..., 1::2]
        width //= 2
    return out


class SumTree:
    """Sum tree over ``size`` nonnegative weights.

    >>> t = SumTree([1, 2, 3, 4])
    >>> t.nodes.tolist()
    [10.0, 3.0, 7.0, 1.0, 2.0, 3.0, 4.0]
    >>> t.sample(0.35)
    2
    """

    def __init__(self, weights=None, *, nodes=None, size=None):
        if nodes is not None:
            nodes = np.array(nodes, dtype=np.float64)
            if nodes.ndim != 1 or nodes.size < 1 or (nodes.size + 1) & nodes.size:
                raise TreeError(f"node array length {nodes.size} is not 2L-1")
            self.nodes = nodes
            self.size = (nodes.size + 1) // 2 if size is None else int(size)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            self.nodes = build_nodes(weights)
            self.size = weights.size
        self.leaf_count = (self.nodes.size + 1) // 2
        # Instrumentation: nodes read/written by the last sample/update.
        self.last_visits = 0

    @classmethod
    def from_nodes(cls, nodes, size: int) -> "SumTree":
        return cls(nodes=nodes, size=size)

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"SumTree(size={self.size}, total={self.total!r})"

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def get(self, index: int) -> float:
        self._check_index(index)
        return float(self.nodes[self.leaf_count - 1 + index])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.leaf_count - 1 : self.leaf_count - 1 + self.size].copy()

    def sample(self, u: float) -> int:
        """Leaf whose cumulative interval contains ``u * total``."""
        index, self.last_visits = descend(self.nodes, float(u))
        if index < 0:
            raise TreeError("cannot sample from a tree with zero total")
        return int(index)

    def sample_many(self, us) -> np.ndarray:
        if not self.nodes[0] > 0:
            raise TreeError("cannot sample from a tree with zero total")
        us = np.ascontiguousarray(us, dtype=np.float64)
        out = np.empty(us.size, dtype=np.int64)
        descend_many(self.nodes, us.ravel(), out)
        return out.reshape(us.shape)

    def update(self, index: int, weight: float) -> None:
        self._check_index(index)
        if not weight >= 0:
            raise TreeError(f"negative weight {float(weight)!r} for leaf {index}")
        self.last_visits = set_leaf(self.nodes, index, float(weight))

    def scale_all(self, factor: float) -> None:
        """Multiply every leaf by ``factor`` and recompute internal sums.

        A power-of-two factor scales every node exactly.
        """
        if not factor > 0:
            raise TreeError(f"scale factor must be positive, got {float(factor)!r}")
        scale_nodes(self.nodes, float(factor))

    def check(self, rtol: float = 1e-9) -> None:
        """Full validation pass over the node array."""
        nodes = self.nodes
        if np.any(nodes < 0):
            raise TreeError("negative node")
        if np.any(nodes[self.leaf_count - 1 + self.size :] != 0):
            raise TreeError("nonzero padding leaf")
        internal = np.arange(self.leaf_count - 1)
        sums = nodes[2 * internal + 1] + nodes[2 * internal + 2]
        if not np.array_equal(sums, nodes[internal]):
            bad = internal[sums != nodes[internal]][0]
            raise TreeError(f"node {bad} is not the sum of its children")
        leaf_sum = self.leaves().sum()
        if abs(leaf_sum - self.total) > rtol * max(leaf_sum, 1e-300):
            raise TreeError("root does not match the sum of the leaves")

    def _check_index(self, index):
        if not 0 <= index < self.size:
            raise IndexError(f"leaf {index} out of range [0, {self.size})")


# Functional spellings of the tree operations.
def tree_build(weights) -> SumTree:
    return SumTree(weights)


def tree_sample(tree: SumTree, u: float) -> int:
    return tree.sample(u)


def tree_update(tree: SumTree, index: int, new_weight: float) -> None:
    tree.update(index, new_weight)


def tree_total(tree: SumTree) -> float:
    return tree.total


def tree_get(tree: SumTree, index: int) -> float:
    return tree.get(index)


def tree_scale_all(tree: SumTree, factor: float) -> None:
    tree.scale_all(factor)


def mixture_sample(primary: SumTree, fallback: SumTree, theta: float, u1: float, u2: float) -> int:
    """Draw from ``(1 - theta) * primary + theta * fallback``: ``u1`` picks the
    component and ``u2`` drives the descent."""
    if not 0.0 <= theta <= 1.0:
        raise TreeError(f"theta must lie in [0, 1], got {theta!r}")
    if u1 < theta:
        return fallback.sample(u2)
    return primary.sample(u2)
