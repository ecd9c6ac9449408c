"""Leaders: a grid of sliding-buffer learners combined by a dense MW.

Row ``r`` (0-based) of the grid holds buffers of size ``k = 2**(r+1)``,
column ``s`` picks the step ``eta0 / sqrt(2**(r+s+2))``.  A top-level
:class:`~optexperts.mw.MW1` over the cells decides which cell predicts.

All cells in a row see the same activations from the same starting
buffer, so their buffers are identical and each row stores one buffer.
Only the slot weights differ from cell to cell.

A round is split into three compiled steps so the same kernels serve the
Python learner, the batch simulators and the composite learners:

``leaders_play``
    pick a cell with the combiner, then a slot inside it.
``leaders_queries``
    write the experts whose losses the update needs: one uniform slot per
    cell for its own update, then one fresh prediction per cell that is
    charged to the combiner.
``leaders_apply``
    consume those losses and the round's leader.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

from .core import ExpertsError
from .mw import Buffer, _mw3_step, buffer_activate, mw1_sample, mw1_update, new_buffer, uniform_index
from .sampling import mixed_sample, tree_build, tree_size

LeadersState = namedtuple(
    "LeadersState",
    [
        "dims",  # [rows, cols, num_experts]
        "trees", "toff", "kcell", "mixes", "cpar",
        "bexp", "bstamp", "bprev", "bnext", "boff", "bends", "bpos",
        "cw", "cmeta", "combo",  # combiner weights, log scale, [nu, gamma]
        "jslot", "counters",  # counters: [round, last_cell, nodes]
    ],
)


def ceil_log2(x: int) -> int:
    return (int(x) - 1).bit_length() if x > 1 else 0


def grid_shape(L: int, T: int) -> tuple[int, int]:
    return max(1, ceil_log2(L)), max(1, ceil_log2(T))


def leaders_params(L: int, T: int) -> dict:
    eta0 = math.sqrt(math.log(2 * L * T))
    return {"eta0": eta0, "nu": 2 * eta0 * math.sqrt(L / T), "gamma": 1.0 / T}


def new_leaders_state(num_experts: int, L: int, T: int, slot_scale=None) -> LeadersState:
    if num_experts < 1 or L < 1 or T < 1:
        raise ExpertsError("param-domain", "need N, L, T >= 1")
    rows, cols = grid_shape(L, T)
    p = leaders_params(L, T)
    cells = rows * cols
    kcell = np.empty(cells, dtype=np.int64)
    cpar = np.empty((cells, 3))
    toff = np.zeros(cells + 1, dtype=np.int64)
    for r in range(rows):
        for s in range(cols):
            c = r * cols + s
            k = 2 ** (r + 1)
            kcell[c] = k
            # 1-based grid indices (r+1, s+1) in the closed form
            cpar[c] = (p["eta0"] / math.sqrt(2.0 ** (r + s + 2)), p["gamma"],
                       k if slot_scale is None else slot_scale)
            toff[c + 1] = toff[c] + 2 * tree_size(k)
    trees = np.zeros(toff[-1])
    for c in range(cells):
        t = trees[toff[c]:toff[c + 1]]
        size = t.shape[0] // 2
        t[size:size + kcell[c]] = 1.0
        tree_build(t)

    boff = np.zeros(rows + 1, dtype=np.int64)
    for r in range(rows):
        boff[r + 1] = boff[r] + 2 ** (r + 1)
    bufs = [new_buffer(2 ** (r + 1), num_experts) for r in range(rows)]
    return LeadersState(
        dims=np.array([rows, cols, num_experts], dtype=np.int64),
        trees=trees, toff=toff, kcell=kcell, mixes=np.zeros((cells, 2)), cpar=cpar,
        bexp=np.concatenate([b.expert for b in bufs]),
        bstamp=np.concatenate([b.stamp for b in bufs]),
        bprev=np.concatenate([b.prev for b in bufs]),
        bnext=np.concatenate([b.next for b in bufs]),
        boff=boff,
        bends=np.stack([b.ends for b in bufs]),
        bpos=np.stack([b.pos for b in bufs]),
        cw=np.ones(cells), cmeta=np.zeros(1), combo=np.array([p["nu"], p["gamma"]]),
        jslot=np.zeros(cells, dtype=np.int64),
        counters=np.zeros(3, dtype=np.int64),
    )


@njit(cache=True)
def _cell_sample(st, c, rng):
    cols = st.dims[1]
    tree = st.trees[st.toff[c]:st.toff[c + 1]]
    slot, touched = mixed_sample(tree, st.kcell[c], st.mixes[c], rng)
    st.counters[2] += touched
    return st.bexp[st.boff[c // cols] + slot]


@njit(cache=True)
def leaders_predict(st, rng):
    """A prediction drawn from the current law without recording it."""
    c = mw1_sample(st.cw, rng)
    return _cell_sample(st, c, rng), c


@njit(cache=True)
def leaders_play(st, rng):
    x, c = leaders_predict(st, rng)
    st.counters[1] = c
    return x


@njit(cache=True)
def leaders_num_queries(st):
    return 2 * st.dims[0] * st.dims[1]


@njit(cache=True)
def leaders_queries(st, rng, out, off):
    cols = st.dims[1]
    cells = st.dims[0] * cols
    trees, toff, kcell, mixes, bexp, boff, jslot = st.trees, st.toff, st.kcell, st.mixes, st.bexp, st.boff, st.jslot
    for c in range(cells):
        j = uniform_index(kcell[c], rng)
        jslot[c] = j
        out[off + c] = bexp[boff[c // cols] + j]
    nodes = 0
    for c in range(cells):
        slot, touched = mixed_sample(trees[toff[c]:toff[c + 1]], kcell[c], mixes[c], rng)
        nodes += touched
        out[off + cells + c] = bexp[boff[c // cols] + slot]
    st.counters[2] += nodes
    return 2 * cells


@njit(cache=True)
def leaders_apply(st, losses, off, leader):
    rows = st.dims[0]
    cols = st.dims[1]
    cells = rows * cols
    trees, toff, kcell, mixes, cpar, jslot = st.trees, st.toff, st.kcell, st.mixes, st.cpar, st.jslot
    nodes = 0
    for c in range(cells):
        nodes += _mw3_step(
            trees[toff[c]:toff[c + 1]], mixes[c], kcell[c], cpar[c, 2], cpar[c, 0], cpar[c, 1],
            jslot[c], losses[off + c],
        )
    st.counters[2] += nodes
    stamp = st.counters[0]
    for r in range(rows):
        a = st.boff[r]
        b = st.boff[r + 1]
        buffer_activate(
            Buffer(st.bexp[a:b], st.bstamp[a:b], st.bprev[a:b], st.bnext[a:b], st.bends[r], st.bpos[r]),
            leader, stamp,
        )
    mw1_update(st.cw, st.cmeta, st.combo[0], st.combo[1], losses[off + cells:off + 2 * cells])
    st.counters[0] += 1


@njit(cache=True)
def _leaders_run(st, table, actions, leaders, play_rng, update_rng, played):
    q = np.empty(leaders_num_queries(st), dtype=np.int64)
    losses = np.empty(q.size)
    for t in range(actions.size):
        played[t] = leaders_play(st, play_rng)
        leaders_queries(st, update_rng, q, 0)
        for i in range(q.size):
            losses[i] = table[q[i], actions[t]]
        leaders_apply(st, losses, 0, leaders[t])


class Leaders:
    """Leaders learner over ``num_experts`` experts for leader budget ``L``.

    ``observe`` expects the round's leader as feedback; see
    :class:`~optexperts.core.LeaderFeed` for computing it from an oracle.
    """

    def __init__(self, num_experts: int, L: int, T: int, slot_scale=None):
        self.num_experts = int(num_experts)
        self.L = int(L)
        self.T = int(T)
        p = leaders_params(self.L, self.T)
        self.eta0, self.nu, self.gamma = p["eta0"], p["nu"], p["gamma"]
        self.state = new_leaders_state(self.num_experts, self.L, self.T, slot_scale)
        self.rows, self.cols = grid_shape(self.L, self.T)
        self.value_calls = 0
        self._queries = np.empty(2 * self.rows * self.cols, dtype=np.int64)

    @property
    def round(self) -> int:
        return int(self.state.counters[0])

    @property
    def last_cell(self) -> tuple[int, int]:
        """Grid cell ``(r, s)`` (0-based) chosen by the latest ``play``."""
        return divmod(int(self.state.counters[1]), self.cols)

    @property
    def nodes_touched(self) -> int:
        return int(self.state.counters[2])

    def cell_params(self) -> list[dict]:
        out = []
        for c in range(self.rows * self.cols):
            r, s = divmod(c, self.cols)
            out.append({"r": r + 1, "s": s + 1, "k": int(self.state.kcell[c]),
                        "eta": float(self.state.cpar[c, 0]), "gamma": float(self.state.cpar[c, 1])})
        return out

    def combiner_probabilities(self) -> np.ndarray:
        return self.state.cw / self.state.cw.sum()

    def buffer(self, r: int) -> np.ndarray:
        """Experts in the row-``r`` buffer, by slot."""
        return self.state.bexp[self.state.boff[r]:self.state.boff[r + 1]].copy()

    def play(self, rng) -> int:
        return int(leaders_play(self.state, rng))

    def observe(self, loss_of, leader: int, rng) -> None:
        if not 0 <= leader < self.num_experts:
            raise ExpertsError("expert-range", f"leader {leader} out of range")
        leaders_queries(self.state, rng, self._queries, 0)
        losses = np.asarray(loss_of(self._queries), dtype=float)
        self.value_calls += self._queries.size
        leaders_apply(self.state, losses, 0, int(leader))


def simulate_leaders(learner: Leaders, table, actions, leaders, play_rng, update_rng) -> np.ndarray:
    """Run ``learner`` against ``table[:, actions[t]]`` with leader feedback ``leaders[t]``."""
    table = np.ascontiguousarray(table, dtype=float)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    leaders = np.ascontiguousarray(leaders, dtype=np.int64)
    played = np.empty(actions.size, dtype=np.int64)
    _leaders_run(learner.state, table, actions, leaders, play_rng, update_rng, played)
    learner.value_calls += actions.size * learner._queries.size
    return played
