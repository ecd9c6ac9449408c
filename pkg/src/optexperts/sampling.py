"""Sum-tree sampling and the implicit mixed-weight representation.

A sum tree is a flat ``float64`` array of length ``2 * size`` where
``size`` is the smallest power of two holding ``capacity`` leaves.  Node 1
is the root, node ``v`` has children ``2v`` and ``2v + 1`` and leaf ``i``
lives at ``size + i``.

Mixed weights keep ``w(x) = alpha(x) + beta`` with ``alpha`` in a sum tree
and the shared ``beta`` in a two-slot array ``mix = [beta, log_scale]``.
``alpha`` may go negative; only the implied weights must stay nonnegative.
Sampling descends the tree on the implied subtree masses
``sum(alpha) + beta * leaves``, which draws from the same law as the
two-stage (uniform with probability mu, else by alpha) scheme and stays
valid when some alpha entries are negative.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import ExpertsError

# renormalise the stored weights when the total leaves this band
SCALE_HI = 1e12
SCALE_LO = 1e-12
# fold beta back into the leaves once it dwarfs the average implied weight
BETA_FOLD = 1e3


def tree_size(capacity: int) -> int:
    size = 1
    while size < capacity:
        size *= 2
    return size


def new_tree(capacity: int) -> np.ndarray:
    return np.zeros(2 * tree_size(capacity))


@njit(cache=True)
def tree_set(tree, i, w):
    """Set leaf ``i`` and refresh its ancestors; returns nodes touched."""
    size = tree.shape[0] // 2
    node = size + i
    tree[node] = w
    touched = 1
    node //= 2
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node //= 2
        touched += 1
    return touched


@njit(cache=True)
def tree_build(tree):
    size = tree.shape[0] // 2
    for node in range(size - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]


@njit(cache=True)
def tree_descend(tree, capacity, beta, u):
    """Leaf for ``u`` in ``[0, total)`` where each leaf weighs ``leaf + beta``.

    Returns ``(leaf, nodes_touched)``.  Branches with no mass are never
    entered, so round-off at the right edge cannot land on an empty leaf.
    """
    size = tree.shape[0] // 2
    node = 1
    lo = 0
    width = size
    touched = 1
    while node < size:
        width //= 2
        left = 2 * node
        n_left = min(max(capacity - lo, 0), width)
        n_right = min(max(capacity - lo - width, 0), width)
        m_left = tree[left] + beta * n_left
        m_right = tree[left + 1] + beta * n_right
        if n_left > 0 and m_left > 0.0 and (u < m_left or not (n_right > 0 and m_right > 0.0)):
            node = left
            if u >= m_left:
                u = m_left * 0.5
        else:
            u -= m_left
            if u < 0.0:
                u = 0.0
            node = left + 1
            lo += width
        touched += 1
    return node - size, touched


@njit(cache=True)
def tree_sample(tree, capacity, rng):
    total = tree[1]
    if not total > 0.0:
        raise ExpertsError("empty-support", "sum tree total is zero")
    return tree_descend(tree, capacity, 0.0, rng.random() * total)


@njit(cache=True)
def mixed_total(tree, capacity, mix):
    return tree[1] + capacity * mix[0]


@njit(cache=True)
def mixed_sample(tree, capacity, mix, rng):
    """Draw ``x`` with probability ``(alpha(x) + beta) / total``."""
    total = tree[1] + capacity * mix[0]
    if not total > 0.0:
        raise ExpertsError("empty-support", "mixed weights are all zero")
    return tree_descend(tree, capacity, mix[0], rng.random() * total)


@njit(cache=True)
def mixed_rebase(tree, capacity, mix):
    """Fold beta into the leaves and rescale so the total is one; O(capacity)."""
    size = tree.shape[0] // 2
    beta = mix[0]
    total = tree[1] + capacity * beta
    for i in range(capacity):
        tree[size + i] = (tree[size + i] + beta) / total
    tree_build(tree)
    mix[0] = 0.0
    mix[1] += math.log(total)


@njit(cache=True)
def mixed_decay(tree, capacity, mix, i, multiplier, beta_increment):
    """One implicit mixed-MW step on leaf ``i``.

    ``alpha(i) <- (alpha(i) + beta) * multiplier - beta`` then
    ``beta <- beta + beta_increment``.  Returns nodes touched (a rebase, when
    triggered, is not counted).
    """
    size = tree.shape[0] // 2
    beta = mix[0]
    new_alpha = (tree[size + i] + beta) * multiplier - beta
    new_beta = beta + beta_increment
    implied = new_alpha + new_beta
    if implied < -1e-12 * (abs(new_beta) + abs(new_alpha)):
        raise ExpertsError("weight-underflow", "implied weight became negative")
    touched = tree_set(tree, i, new_alpha)
    mix[0] = new_beta
    total = tree[1] + capacity * new_beta
    if total > SCALE_HI or total < SCALE_LO or capacity * new_beta > BETA_FOLD * total:
        mixed_rebase(tree, capacity, mix)
    return touched


@njit(cache=True)
def decay_multiplier(x):
    """``exp(-x)`` for ``x >= 0``; underflows cleanly to zero."""
    if x > 745.0:
        return 0.0
    return math.exp(-x)


class SumTree:
    """Binary tree over ``capacity`` nonnegative leaves with cached totals."""

    def __init__(self, capacity: int, weights=None):
        if capacity < 1:
            raise ExpertsError("capacity", "need at least one leaf")
        self.capacity = int(capacity)
        self.tree = new_tree(self.capacity)
        self.nodes_touched = 0
        if weights is not None:
            w = np.asarray(weights, dtype=float)
            if w.shape != (self.capacity,):
                raise ExpertsError("capacity", "weights length must equal capacity")
            _check_weights(w)
            size = self.tree.shape[0] // 2
            self.tree[size:size + self.capacity] = w
            tree_build(self.tree)

    def __len__(self):
        return self.capacity

    def __getitem__(self, index: int) -> float:
        return float(self.tree[self.tree.shape[0] // 2 + index])

    def leaves(self) -> np.ndarray:
        size = self.tree.shape[0] // 2
        return self.tree[size:size + self.capacity].copy()

    def total(self) -> float:
        return float(self.tree[1])

    def update(self, index: int, weight: float) -> None:
        if not 0 <= index < self.capacity:
            raise ExpertsError("index", f"leaf {index} out of range")
        _check_weights(np.array([weight], dtype=float))
        self.nodes_touched += tree_set(self.tree, int(index), float(weight))

    def sample(self, rng) -> int:
        i, touched = tree_sample(self.tree, self.capacity, rng)
        self.nodes_touched += touched
        return int(i)


def _check_weights(w):
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ExpertsError("weight-domain", "weights must be finite and nonnegative")


class MixedWeights:
    """Implicit weights ``alpha(x) + beta`` over ``capacity`` entries.

    ``weights()`` reports absolute implied weights including the stored
    global scale, which is what a dense implementation of the same
    recurrence would hold.
    """

    def __init__(self, capacity: int, initial: float = 1.0):
        self.capacity = int(capacity)
        self.tree = new_tree(self.capacity)
        size = self.tree.shape[0] // 2
        self.tree[size:size + self.capacity] = initial
        tree_build(self.tree)
        self.mix = np.zeros(2)
        self.nodes_touched = 0

    @property
    def alpha(self) -> np.ndarray:
        size = self.tree.shape[0] // 2
        return self.tree[size:size + self.capacity].copy()

    @property
    def beta(self) -> float:
        return float(self.mix[0])

    @property
    def alpha_total(self) -> float:
        return float(self.tree[1])

    def total(self) -> float:
        return float(mixed_total(self.tree, self.capacity, self.mix)) * math.exp(self.mix[1])

    def mixing_mass(self) -> float:
        """Probability of the uniform stage, ``beta / (beta + alpha_total / N)``."""
        denom = self.mix[0] + self.tree[1] / self.capacity
        return float(self.mix[0] / denom)

    def weights(self) -> np.ndarray:
        return (self.alpha + self.mix[0]) * math.exp(self.mix[1])

    def probabilities(self) -> np.ndarray:
        w = self.alpha + self.mix[0]
        return w / w.sum()

    def sample(self, rng) -> int:
        i, touched = mixed_sample(self.tree, self.capacity, self.mix, rng)
        self.nodes_touched += touched
        return int(i)

    def decay_update(self, index: int, multiplier: float, beta_increment: float) -> None:
        """Apply the implicit step; ``beta_increment`` is ``(gamma/N) * W_t`` in stored units."""
        if not 0.0 <= multiplier <= 1.0:
            raise ExpertsError("weight-domain", "multiplier must lie in [0, 1]")
        self.nodes_touched += mixed_decay(
            self.tree, self.capacity, self.mix, int(index), float(multiplier), float(beta_increment)
        )

    def stored_total(self) -> float:
        """Total in stored units (without the global scale)."""
        return float(mixed_total(self.tree, self.capacity, self.mix))
