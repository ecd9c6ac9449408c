"""The main learner for experts with an optimization oracle.

Two sub-learners are combined by a two-way dense MW:

* an amortised MW over a random multiset ``R`` of ``floor(2 sqrt(N) ln T)``
  experts, and
* :class:`~optexperts.leaders.Leaders` with leader budget ``floor(sqrt(N))``.

Each round the update draws its own fresh predictions from both
sub-learners and charges their realized losses to the combiner.  The
expert actually played is drawn from a separate generator and is never
read by any update, which makes the learner safe against adaptive
adversaries (:class:`SelfOblivious`).
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

from .core import ExpertsError, LeaderFeed, OraclePair
from .leaders import (
    leaders_apply,
    leaders_num_queries,
    leaders_params,
    leaders_predict,
    leaders_queries,
    new_leaders_state,
)
from .mw import mw1_sample, mw1_update, mw2_step, uniform_index
from .sampling import mixed_sample, new_tree, tree_build

MainState = namedtuple(
    "MainState",
    [
        "tree", "mix", "members", "par",  # par: [eta, gamma, nu]
        "ld",  # Leaders state
        "cw", "cmeta",  # two-way combiner
        "counters",  # [round, horizon, last_choice, y_slot]
    ],
)


def main_params(N: int, T: int) -> dict:
    """Closed-form parameters; every floor is clamped below at 1."""
    return {
        "eta": 2.0 / (N ** 0.25 * math.sqrt(T)),
        "nu": 2.0 * math.sqrt(math.log(2 * T) / T),
        "gamma": 1.0 / T,
        "R": max(1, math.floor(2.0 * math.sqrt(N) * math.log(T))),
        "L": max(1, math.isqrt(N)),
    }


def new_main_state(N: int, T: int, rng) -> MainState:
    """Fresh state; ``rng`` draws the candidate multiset ``R``."""
    if N < 1 or T < 1:
        raise ExpertsError("param-domain", "need N >= 1 and T >= 1")
    p = main_params(N, T)
    members = rng.integers(0, N, size=p["R"]).astype(np.int64)
    tree = new_tree(members.size)
    size = tree.shape[0] // 2
    tree[size:size + members.size] = 1.0
    tree_build(tree)
    return MainState(
        tree=tree, mix=np.zeros(2), members=members,
        par=np.array([p["eta"], p["gamma"], p["nu"]]),
        ld=new_leaders_state(N, p["L"], T),
        cw=np.ones(2), cmeta=np.zeros(1),
        counters=np.array([0, T, -1, 0], dtype=np.int64),
    )


@njit(cache=True)
def _predict(st, rng):
    c = mw1_sample(st.cw, rng)
    if c == 0:
        slot, _ = mixed_sample(st.tree, st.members.size, st.mix, rng)
        return st.members[slot], c
    x, _ = leaders_predict(st.ld, rng)
    return x, c


@njit(cache=True)
def main_play(st, rng):
    if st.counters[0] >= st.counters[1]:
        raise ExpertsError("horizon-exceeded", "played past the horizon")
    x, c = _predict(st, rng)
    st.counters[2] = c
    return x


@njit(cache=True)
def main_num_queries(st):
    return 3 + leaders_num_queries(st.ld)


@njit(cache=True)
def main_queries(st, rng, out):
    """Experts whose losses the next update needs, written into ``out``.

    Layout: ``[R slot to update, fresh R prediction, Leaders queries...,
    fresh Leaders prediction]``.
    """
    m = st.members.size
    y = uniform_index(m, rng)
    st.counters[3] = y
    out[0] = st.members[y]
    slot, _ = mixed_sample(st.tree, m, st.mix, rng)
    out[1] = st.members[slot]
    n = leaders_queries(st.ld, rng, out, 2)
    x, _ = leaders_predict(st.ld, rng)
    out[2 + n] = x
    return 3 + n


@njit(cache=True)
def main_apply(st, losses, leader):
    m = st.members.size
    mw2_step(st.tree, st.mix, m, st.par[0], st.par[1], st.counters[3], losses[0])
    leaders_apply(st.ld, losses, 2, leader)
    pair = np.empty(2)
    pair[0] = losses[1]
    pair[1] = losses[losses.size - 1]
    mw1_update(st.cw, st.cmeta, st.par[2], st.par[1], pair)
    st.counters[0] += 1


@njit(cache=True)
def _main_run(st, table, actions, leaders, play_rng, update_rng, played):
    q = np.empty(main_num_queries(st), dtype=np.int64)
    losses = np.empty(q.size)
    for t in range(actions.size):
        played[t] = main_play(st, play_rng)
        main_queries(st, update_rng, q)
        for i in range(q.size):
            losses[i] = table[q[i], actions[t]]
        main_apply(st, losses, leaders[t])


@njit(cache=True)
def _main_run_adaptive(st, base, penalty, play_rng, update_rng, played, cum, player_loss):
    """Adversary: ``f_t = (1 - penalty) * base[:, t] + penalty * [x == x_{t-1}]``.

    The penalized expert is the learner's own previous play, so the loss
    sequence depends on the realized plays.  ``cum`` receives every
    expert's cumulative loss and the leader is its argmin.
    """
    n = base.shape[0]
    q = np.empty(main_num_queries(st), dtype=np.int64)
    losses = np.empty(q.size)
    prev = -1
    total = 0.0
    for t in range(base.shape[1]):
        x = main_play(st, play_rng)
        played[t] = x
        total += (1.0 - penalty) * base[x, t] + (penalty if x == prev else 0.0)
        main_queries(st, update_rng, q)
        for i in range(q.size):
            losses[i] = (1.0 - penalty) * base[q[i], t] + (penalty if q[i] == prev else 0.0)
        for e in range(n):
            cum[e] += (1.0 - penalty) * base[e, t] + (penalty if e == prev else 0.0)
        leader = 0
        for e in range(1, n):
            if cum[e] < cum[leader]:
                leader = e
        main_apply(st, losses, leader)
        prev = x
    player_loss[0] = total


class OptimizableExperts:
    """The main learner over ``N`` experts and horizon ``T``.

    ``observe`` takes a metered per-expert loss accessor and the round's
    leader.  Use :meth:`observe_oracle` to have the leader computed from an
    :class:`~optexperts.core.OraclePair` (one Opt call per round).
    """

    def __init__(self, N: int, T: int, rng):
        self.N = int(N)
        self.T = int(T)
        p = main_params(self.N, self.T)
        self.eta, self.nu, self.gamma, self.L = p["eta"], p["nu"], p["gamma"], p["L"]
        self.leaders_eta0 = leaders_params(self.L, self.T)["eta0"]
        self.state = new_main_state(self.N, self.T, rng)
        self.value_calls = 0
        self._queries = np.empty(main_num_queries(self.state), dtype=np.int64)
        self._feed = None

    @property
    def round(self) -> int:
        return int(self.state.counters[0])

    @property
    def candidates(self) -> np.ndarray:
        return self.state.members.copy()

    @property
    def queries_per_round(self) -> int:
        return int(self._queries.size)

    def combiner_probabilities(self) -> np.ndarray:
        return self.state.cw / self.state.cw.sum()

    def last_choice(self) -> int:
        """0 if the latest play came from the candidate-set learner, 1 if from Leaders."""
        return int(self.state.counters[2])

    def play(self, rng) -> int:
        return int(main_play(self.state, rng))

    def observe(self, loss_of, leader: int, rng) -> None:
        if not 0 <= leader < self.N:
            raise ExpertsError("expert-range", f"leader {leader} out of range")
        main_queries(self.state, rng, self._queries)
        losses = np.asarray(loss_of(self._queries), dtype=float)
        self.value_calls += self._queries.size
        main_apply(self.state, losses, int(leader))

    def observe_oracle(self, oracle: OraclePair, action: int, rng) -> None:
        """Update from ``oracle`` on adversary ``action``; the leader costs one Opt call."""
        if self._feed is None or self._feed.oracle is not oracle:
            self._feed = LeaderFeed(oracle)
        leader = self._feed.append(action)
        self.observe(oracle.loss_of(action), leader, rng)


class SelfOblivious:
    """Wraps a learner so play and update draw from separate generators.

    The played expert is returned to the caller and discarded; ``observe``
    never receives it.  Against an oblivious adversary each round's play
    has the same law as the unwrapped learner's.
    """

    def __init__(self, inner, play_rng, update_rng):
        if inner.round != 0:
            raise ExpertsError("param-domain", "wrap a freshly constructed learner")
        self.inner = inner
        self.play_rng = play_rng
        self.update_rng = update_rng

    @property
    def round(self) -> int:
        return self.inner.round

    def play(self) -> int:
        return self.inner.play(self.play_rng)

    def observe(self, loss_of, leader: int) -> None:
        self.inner.observe(loss_of, leader, self.update_rng)

    def observe_oracle(self, oracle, action: int) -> None:
        self.inner.observe_oracle(oracle, action, self.update_rng)


def simulate_main(learner: OptimizableExperts, table, actions, leaders, play_rng, update_rng) -> np.ndarray:
    """Run against the oblivious loss sequence ``table[:, actions[t]]``."""
    table = np.ascontiguousarray(table, dtype=float)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    leaders = np.ascontiguousarray(leaders, dtype=np.int64)
    if learner.round + actions.size > learner.T:
        raise ExpertsError("horizon-exceeded", "sequence longer than the horizon")
    played = np.empty(actions.size, dtype=np.int64)
    _main_run(learner.state, table, actions, leaders, play_rng, update_rng, played)
    learner.value_calls += actions.size * learner._queries.size
    return played


def simulate_main_adaptive(learner: OptimizableExperts, base, penalty, play_rng, update_rng):
    """Run against the repeat-penalizing adaptive adversary.

    Returns ``(played, player_cum_loss, comparator_cum_loss)``.
    """
    base = np.ascontiguousarray(base, dtype=float)
    if learner.round + base.shape[1] > learner.T:
        raise ExpertsError("horizon-exceeded", "sequence longer than the horizon")
    played = np.empty(base.shape[1], dtype=np.int64)
    cum = np.zeros(base.shape[0])
    player = np.zeros(1)
    _main_run_adaptive(learner.state, base, float(penalty), play_rng, update_rng, played, cum, player)
    learner.value_calls += base.shape[1] * learner._queries.size
    return played, float(player[0]), cum
