"""Multiplicative-weights learners with a mixed (gamma) floor.

``MW1``
    dense mixed MW over ``N`` experts, O(N) per round.
``MW2``
    amortised variant: each round one uniformly drawn expert absorbs an
    importance-weighted loss ``N * f(y)``; O(log N) per round through
    :mod:`optexperts.sampling`.
``MW3``
    MW2 over the ``k`` slots of a buffer that holds the most recently
    activated distinct experts.

Each learner has ``play(rng)`` and ``observe(...)``.  The compiled
kernels underneath are shared with the batch simulators in this module
and with the composite learners built on top of them.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

from .core import ExpertsError, check_losses
from .sampling import (
    SCALE_HI,
    SCALE_LO,
    decay_multiplier,
    mixed_decay,
    mixed_sample,
    mixed_total,
    new_tree,
    tree_build,
)

# ---------------------------------------------------------------- MW1 kernels


@njit(cache=True)
def mw1_sample(w, rng):
    total = 0.0
    for x in range(w.size):
        total += w[x]
    if not total > 0.0:
        raise ExpertsError("empty-support", "all weights are zero")
    u = rng.random() * total
    acc = 0.0
    last = 0
    for x in range(w.size):
        if w[x] > 0.0:
            acc += w[x]
            last = x
            if u < acc:
                return x
    return last


@njit(cache=True)
def mw1_update(w, meta, eta, gamma, losses):
    """``w(x) <- w(x) exp(-eta f(x)) + (gamma/N) W``; meta = [log_scale]."""
    n = w.size
    total = 0.0
    for x in range(n):
        total += w[x]
    inc = gamma / n * total
    new_total = 0.0
    for x in range(n):
        f = losses[x]
        if f < 0.0 or f != f:
            raise ExpertsError("loss-range", "losses must be nonnegative")
        w[x] = w[x] * decay_multiplier(eta * f) + inc
        new_total += w[x]
    if new_total > SCALE_HI or new_total < SCALE_LO:
        for x in range(n):
            w[x] /= new_total
        meta[0] += math.log(new_total)


# ---------------------------------------------------------------- MW2 kernels


@njit(cache=True)
def uniform_index(n, rng):
    i = int(rng.random() * n)
    return i if i < n else n - 1


@njit(cache=True)
def mw2_step(tree, mix, capacity, eta, gamma, slot, loss):
    """Importance-weighted update of ``slot`` with scale ``capacity``."""
    if loss < 0.0 or loss != loss:
        raise ExpertsError("loss-range", "losses must be nonnegative")
    total = mixed_total(tree, capacity, mix)
    mult = decay_multiplier(eta * capacity * loss)
    return mixed_decay(tree, capacity, mix, slot, mult, gamma / capacity * total)


# ------------------------------------------------------------- buffer kernels

Buffer = namedtuple("Buffer", ["expert", "stamp", "prev", "next", "ends", "pos"])


def new_buffer(k: int, num_experts: int) -> Buffer:
    """Fresh buffer: slot ``i`` holds expert ``i`` and slot 0 is the oldest.

    When ``k > num_experts`` the surplus slots repeat experts modulo ``N``;
    every expert is then always present and nothing is ever evicted.
    """
    slots = np.arange(k, dtype=np.int64)
    expert = slots % num_experts
    pos = np.full(num_experts, -1, dtype=np.int64)
    for s in range(k - 1, -1, -1):
        pos[expert[s]] = s
    return Buffer(
        expert=expert,
        stamp=slots - k,
        prev=slots - 1,
        next=np.where(slots + 1 < k, slots + 1, -1).astype(np.int64),
        ends=np.array([0, k - 1], dtype=np.int64),
        pos=pos,
    )


@njit(cache=True)
def _buffer_unlink(buf, s):
    p = buf.prev[s]
    q = buf.next[s]
    if p >= 0:
        buf.next[p] = q
    else:
        buf.ends[0] = q
    if q >= 0:
        buf.prev[q] = p
    else:
        buf.ends[1] = p


@njit(cache=True)
def _buffer_push_newest(buf, s):
    tail = buf.ends[1]
    buf.prev[s] = tail
    buf.next[s] = -1
    if tail >= 0:
        buf.next[tail] = s
    else:
        buf.ends[0] = s
    buf.ends[1] = s


@njit(cache=True)
def buffer_activate(buf, expert, stamp):
    """Refresh or install ``expert``; returns the evicted slot or -1."""
    s = buf.pos[expert]
    if s >= 0:
        buf.stamp[s] = stamp
        if buf.ends[1] != s:
            _buffer_unlink(buf, s)
            _buffer_push_newest(buf, s)
        return -1
    s = buf.ends[0]
    old = buf.expert[s]
    if buf.pos[old] == s:
        buf.pos[old] = -1
    buf.expert[s] = expert
    buf.pos[expert] = s
    buf.stamp[s] = stamp
    if buf.ends[1] != s:
        _buffer_unlink(buf, s)
        _buffer_push_newest(buf, s)
    return s


# ----------------------------------------------------------------- learners


class MW1:
    """Dense mixed multiplicative weights.

    Parameters
    ----------
    num_experts : int
    eta : float
        Step size.
    gamma : float
        Fraction of the total weight mixed back uniformly every round.
    """

    def __init__(self, num_experts: int, eta: float, gamma: float):
        if num_experts < 1 or eta <= 0 or not 0 <= gamma <= 1:
            raise ExpertsError("param-domain", "need N >= 1, eta > 0, 0 <= gamma <= 1")
        self.num_experts = int(num_experts)
        self.eta = float(eta)
        self.gamma = float(gamma)
        self.w = np.ones(self.num_experts)
        self.meta = np.zeros(1)
        self.round = 0

    def probabilities(self) -> np.ndarray:
        return self.w / self.w.sum()

    def weights(self) -> np.ndarray:
        return self.w * math.exp(self.meta[0])

    def play(self, rng) -> int:
        return int(mw1_sample(self.w, rng))

    def observe(self, losses) -> None:
        losses = check_losses(losses)
        if losses.shape != (self.num_experts,):
            raise ExpertsError("loss-range", "need one loss per expert")
        mw1_update(self.w, self.meta, self.eta, self.gamma, losses)
        self.round += 1


class MW2:
    """Amortised mixed MW over ``members`` (default: all experts).

    ``members`` may repeat experts; each entry is a separate slot.
    """

    def __init__(self, num_experts: int, eta: float, gamma: float, members=None):
        if eta <= 0 or not 0 <= gamma <= 1:
            raise ExpertsError("param-domain", "need eta > 0, 0 <= gamma <= 1")
        self.num_experts = int(num_experts)
        if members is None:
            members = np.arange(self.num_experts)
        self.members = np.asarray(members, dtype=np.int64)
        if self.members.size < 1:
            raise ExpertsError("param-domain", "need at least one slot")
        self.capacity = int(self.members.size)
        self.eta = float(eta)
        self.gamma = float(gamma)
        self.tree = new_tree(self.capacity)
        size = self.tree.shape[0] // 2
        self.tree[size:size + self.capacity] = 1.0
        tree_build(self.tree)
        self.mix = np.zeros(2)
        self.round = 0
        self.nodes_touched = 0
        self.value_calls = 0

    def weights(self) -> np.ndarray:
        size = self.tree.shape[0] // 2
        return (self.tree[size:size + self.capacity] + self.mix[0]) * math.exp(self.mix[1])

    def probabilities(self) -> np.ndarray:
        w = self.weights()
        return w / w.sum()

    def play_slot(self, rng) -> int:
        slot, touched = mixed_sample(self.tree, self.capacity, self.mix, rng)
        self.nodes_touched += touched
        return int(slot)

    def play(self, rng) -> int:
        return int(self.members[self.play_slot(rng)])

    def observe(self, loss_of, rng) -> None:
        """Draw one slot uniformly, query its loss once and update it."""
        slot = uniform_index(self.capacity, rng)
        loss = float(np.asarray(loss_of(self.members[slot:slot + 1]), dtype=float)[0])
        self.value_calls += 1
        self.update_slot(slot, loss)

    def update_slot(self, slot: int, loss: float) -> None:
        self.nodes_touched += mw2_step(
            self.tree, self.mix, self.capacity, self.eta, self.gamma, int(slot), float(loss)
        )
        self.round += 1


class SlidingBuffer:
    """``k`` slots holding the most recently activated distinct experts.

    Eviction removes the slot whose last activation is oldest; slots are
    kept in a recency list so refresh and eviction are O(1).
    """

    def __init__(self, k: int, num_experts: int):
        if k < 1 or num_experts < 1:
            raise ExpertsError("param-domain", "need k >= 1 and N >= 1")
        self.k = int(k)
        self.num_experts = int(num_experts)
        self.buf = new_buffer(self.k, self.num_experts)

    @property
    def experts(self) -> np.ndarray:
        return self.buf.expert.copy()

    @property
    def stamps(self) -> np.ndarray:
        return self.buf.stamp.copy()

    def __contains__(self, expert) -> bool:
        return 0 <= expert < self.num_experts and self.buf.pos[expert] >= 0

    def slot_of(self, expert: int) -> int:
        return int(self.buf.pos[expert])

    def activate(self, expert: int, stamp: int) -> int:
        if not 0 <= expert < self.num_experts:
            raise ExpertsError("expert-range", f"expert {expert} out of range")
        return int(buffer_activate(self.buf, int(expert), int(stamp)))

    def recency_order(self) -> list[int]:
        """Slots from oldest to newest activation."""
        out = []
        s = self.buf.ends[0]
        while s >= 0:
            out.append(int(s))
            s = self.buf.next[s]
        return out


class MW3:
    """MW2 over the slots of a :class:`SlidingBuffer`.

    ``slot_scale`` replaces ``N`` in the importance weight and the mixing
    term; it defaults to the buffer size ``k``.  Pass the number of experts
    to get the literal ``N``-scaled recurrence instead.
    """

    def __init__(self, num_experts: int, k: int, eta: float, gamma: float, slot_scale=None):
        if eta <= 0 or not 0 <= gamma <= 1:
            raise ExpertsError("param-domain", "need eta > 0, 0 <= gamma <= 1")
        self.num_experts = int(num_experts)
        self.k = int(k)
        self.eta = float(eta)
        self.gamma = float(gamma)
        self.slot_scale = float(self.k if slot_scale is None else slot_scale)
        self.buffer = SlidingBuffer(self.k, self.num_experts)
        self.tree = new_tree(self.k)
        size = self.tree.shape[0] // 2
        self.tree[size:size + self.k] = 1.0
        tree_build(self.tree)
        self.mix = np.zeros(2)
        self.round = 0
        self.value_calls = 0
        self.nodes_touched = 0

    def weights(self) -> np.ndarray:
        size = self.tree.shape[0] // 2
        return (self.tree[size:size + self.k] + self.mix[0]) * math.exp(self.mix[1])

    def play(self, rng) -> int:
        slot, touched = mixed_sample(self.tree, self.k, self.mix, rng)
        self.nodes_touched += touched
        return int(self.buffer.buf.expert[slot])

    def observe(self, loss_of, activated: int, rng) -> None:
        j = uniform_index(self.k, rng)
        expert = self.buffer.buf.expert[j:j + 1]
        loss = float(np.asarray(loss_of(expert), dtype=float)[0])
        self.value_calls += 1
        self.update_slot(j, loss)
        self.buffer.activate(activated, self.round)
        self.round += 1

    def update_slot(self, slot: int, loss: float) -> None:
        self.nodes_touched += _mw3_step(
            self.tree, self.mix, self.k, self.slot_scale, self.eta, self.gamma, int(slot), float(loss)
        )


@njit(cache=True)
def _mw3_step(tree, mix, k, scale, eta, gamma, slot, loss):
    if loss < 0.0 or loss != loss:
        raise ExpertsError("loss-range", "losses must be nonnegative")
    total = mixed_total(tree, k, mix)
    mult = decay_multiplier(eta * scale * loss)
    return mixed_decay(tree, k, mix, slot, mult, gamma / scale * total)


# ---------------------------------------------------------- batch simulators
#
# Each simulator runs a learner for ``len(actions)`` rounds against the
# loss table ``table[x, a]`` and returns the experts it played.  The
# learner objects are advanced in place.


@njit(cache=True)
def _mw1_run(w, meta, eta, gamma, table, actions, rng, played):
    for t in range(actions.size):
        played[t] = mw1_sample(w, rng)
        mw1_update(w, meta, eta, gamma, table[:, actions[t]])


@njit(cache=True)
def _mw2_run(tree, mix, members, eta, gamma, table, actions, play_rng, update_rng, played):
    m = members.size
    nodes = 0
    for t in range(actions.size):
        slot, touched = mixed_sample(tree, m, mix, play_rng)
        played[t] = members[slot]
        nodes += touched
        y = uniform_index(m, update_rng)
        nodes += mw2_step(tree, mix, m, eta, gamma, y, table[members[y], actions[t]])
    return nodes


@njit(cache=True)
def _mw3_run(tree, mix, k, scale, eta, gamma, buf, table, actions, activations, t0, play_rng, update_rng, played):
    for t in range(actions.size):
        slot, _ = mixed_sample(tree, k, mix, play_rng)
        played[t] = buf.expert[slot]
        j = uniform_index(k, update_rng)
        _mw3_step(tree, mix, k, scale, eta, gamma, j, table[buf.expert[j], actions[t]])
        buffer_activate(buf, activations[t], t0 + t)


def _table_args(table, actions):
    table = np.ascontiguousarray(table, dtype=float)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    return table, actions


def simulate_mw1(learner: MW1, table, actions, rng) -> np.ndarray:
    """Run ``learner`` over ``table[:, actions[t]]``; returns played experts."""
    table, actions = _table_args(table, actions)
    played = np.empty(actions.size, dtype=np.int64)
    _mw1_run(learner.w, learner.meta, learner.eta, learner.gamma, table, actions, rng, played)
    learner.round += actions.size
    return played


def simulate_mw2(learner: MW2, table, actions, play_rng, update_rng=None) -> np.ndarray:
    table, actions = _table_args(table, actions)
    played = np.empty(actions.size, dtype=np.int64)
    learner.nodes_touched += _mw2_run(
        learner.tree, learner.mix, learner.members, learner.eta, learner.gamma,
        table, actions, play_rng, update_rng if update_rng is not None else play_rng, played,
    )
    learner.round += actions.size
    learner.value_calls += actions.size
    return played


def simulate_mw3(learner: MW3, table, actions, activations, play_rng, update_rng=None) -> np.ndarray:
    table, actions = _table_args(table, actions)
    activations = np.ascontiguousarray(activations, dtype=np.int64)
    played = np.empty(actions.size, dtype=np.int64)
    _mw3_run(
        learner.tree, learner.mix, learner.k, learner.slot_scale, learner.eta, learner.gamma,
        learner.buffer.buf, table, actions, activations, learner.round,
        play_rng, update_rng if update_rng is not None else play_rng, played,
    )
    learner.round += actions.size
    learner.value_calls += actions.size
    return played
