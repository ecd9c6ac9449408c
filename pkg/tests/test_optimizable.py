import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optexperts.acceptance import transcript_audit
from optexperts.core import ExpertsError
from optexperts.instances import gen_hard_experts
from optexperts.optimizable import (
    OptimizableExperts,
    SelfOblivious,
    main_params,
    new_main_state,
    simulate_main,
    simulate_main_adaptive,
)


class DenseReference:
    """Step-by-step dense update of the main learner.

    Randomness is taken from the recorded choices of the learner under
    test (which slot was updated, which experts were drawn); everything
    else is recomputed here with plain O(N) loops.
    """

    def __init__(self, N, T, members):
        self.N, self.T = N, T
        p = main_params(N, T)
        self.eta, self.nu, self.gamma = p["eta"], p["nu"], 1.0 / T
        self.members = list(members)
        self.wR = np.ones(len(members))
        L = max(1, math.isqrt(N))
        self.rows = max(1, math.ceil(math.log2(L))) if L > 1 else 1
        self.cols = max(1, math.ceil(math.log2(T))) if T > 1 else 1
        self.C = self.rows * self.cols
        eta0 = math.sqrt(math.log(2 * L * T))
        self.nuL = 2 * eta0 * math.sqrt(L / T)
        self.cell_eta = [eta0 / math.sqrt(2.0 ** (r + 1 + s + 1)) for r in range(self.rows) for s in range(self.cols)]
        self.cell_w = [np.ones(2 ** (c // self.cols + 1)) for c in range(self.C)]
        self.slots = [[i % N for i in range(2 ** (r + 1))] for r in range(self.rows)]
        self.stamps = [[i - 2 ** (r + 1) for i in range(2 ** (r + 1))] for r in range(self.rows)]
        self.wL = np.ones(self.C)
        self.wc = np.ones(2)
        self.t = 0

    @staticmethod
    def _mix(w, gamma):
        return w + gamma / w.size * w.sum()

    def step(self, f, y, jslots, queries, leader):
        m = len(self.members)
        assert queries[0] == self.members[y]
        new = self._mix(self.wR, self.gamma)
        new[y] = self.wR[y] * math.exp(-self.eta * m * f[self.members[y]]) + self.gamma / m * self.wR.sum()
        self.wR = new
        for c in range(self.C):
            r = c // self.cols
            k = 2 ** (r + 1)
            j = jslots[c]
            e = self.slots[r][j]
            assert queries[2 + c] == e
            w = self.cell_w[c]
            new = self._mix(w, self.gamma)
            new[j] = w[j] * math.exp(-self.cell_eta[c] * k * f[e]) + self.gamma / k * w.sum()
            self.cell_w[c] = new
        for r in range(self.rows):
            if leader in self.slots[r]:
                self.stamps[r][self.slots[r].index(leader)] = self.t
            else:
                old = min(range(len(self.slots[r])), key=lambda s: (self.stamps[r][s], s))
                self.slots[r][old], self.stamps[r][old] = leader, self.t
        fl = np.array([f[queries[2 + self.C + c]] for c in range(self.C)])
        self.wL = self.wL * np.exp(-self.nuL * fl) + self.gamma / self.C * self.wL.sum()
        pair = np.array([f[queries[1]], f[queries[2 + 2 * self.C]]])
        self.wc = self.wc * np.exp(-self.nu * pair) + self.gamma / 2 * self.wc.sum()
        self.t += 1


def implied(tree, mix, k):
    size = tree.shape[0] // 2
    w = tree[size:size + k] + mix[0]
    return w / w.sum()


def normed(w):
    return w / w.sum()


@pytest.mark.parametrize("N,T", [(4, 16), (9, 40)])
def test_transcript_matches_dense_reference(N, T):
    rng = np.random.default_rng(11)
    table = rng.random((N, T))
    learner = OptimizableExperts(N, T, np.random.default_rng(0))
    ref = DenseReference(N, T, learner.candidates)
    upd = np.random.default_rng(1)
    cum = np.zeros(N)
    for t in range(T):
        f = table[:, t]
        cum += f
        leader = int(np.argmin(cum))
        learner.observe(lambda e: f[e], leader, upd)
        st_ = learner.state
        ld = st_.ld
        ref.step(f, int(st_.counters[3]), ld.jslot.tolist(), learner._queries.tolist(), leader)
        assert np.allclose(implied(st_.tree, st_.mix, st_.members.size), normed(ref.wR), rtol=1e-12, atol=0)
        for c in range(ref.C):
            k = ref.cell_w[c].size
            tree = ld.trees[ld.toff[c]:ld.toff[c + 1]]
            assert np.allclose(implied(tree, ld.mixes[c], k), normed(ref.cell_w[c]), rtol=1e-12, atol=0)
        for r in range(ref.rows):
            assert ld.bexp[ld.boff[r]:ld.boff[r + 1]].tolist() == ref.slots[r]
        assert np.allclose(normed(ld.cw), normed(ref.wL), rtol=1e-12)
        assert np.allclose(learner.combiner_probabilities(), normed(ref.wc), rtol=1e-12)


def test_parameters():
    N, T = 256, 4096
    p = main_params(N, T)
    assert p["eta"] == 2 / (N ** 0.25 * math.sqrt(T))
    assert p["nu"] == 2 * math.sqrt(math.log(2 * T) / T)
    assert p["R"] == math.floor(2 * math.sqrt(N) * math.log(T)) == 266
    assert p["L"] == 16
    learner = OptimizableExperts(N, T, np.random.default_rng(0))
    assert learner.candidates.size == 266


def test_fresh_combiner_is_even():
    assert np.array_equal(OptimizableExperts(10, 100, np.random.default_rng(0)).combiner_probabilities(), [0.5, 0.5])


def test_single_expert():
    learner = OptimizableExperts(1, 50, np.random.default_rng(0))
    plays = simulate_main(learner, np.random.default_rng(1).random((1, 5)), np.zeros(50, dtype=int),
                          np.zeros(50, dtype=int), np.random.default_rng(2), np.random.default_rng(3))
    assert set(plays.tolist()) == {0}


def run_seeded(seed):
    rng = np.random.default_rng(99)
    table = rng.random((20, 6))
    actions = rng.integers(0, 6, 200)
    leaders = np.argmin(np.cumsum(table[:, actions].T, axis=0), axis=1)
    learner = OptimizableExperts(20, 200, np.random.default_rng(seed))
    return simulate_main(learner, table, actions, leaders, np.random.default_rng(seed + 1),
                         np.random.default_rng(seed + 2))


def test_determinism():
    assert np.array_equal(run_seeded(4), run_seeded(4))
    assert not np.array_equal(run_seeded(4), run_seeded(5))


def test_zero_losses():
    T = 64
    learner = OptimizableExperts(16, T, np.random.default_rng(0))
    table = np.zeros((16, 1))
    played = simulate_main(learner, table, np.zeros(T, dtype=int), np.zeros(T, dtype=int),
                           np.random.default_rng(1), np.random.default_rng(2))
    assert np.allclose(learner.combiner_probabilities(), 0.5, rtol=1e-12)
    assert table[played, 0].sum() == 0.0


def test_horizon_is_enforced():
    learner = OptimizableExperts(4, 2, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(2):
        learner.play(rng)
        learner.observe(lambda e: np.zeros(len(e)), 0, rng)
    with pytest.raises(ExpertsError) as exc:
        learner.play(rng)
    assert exc.value.code == "horizon-exceeded"


def test_hard_instance_regret():
    N, T = 256, 4096
    bound = 40 * N ** 0.25 * math.log(N * T) / math.sqrt(T)
    regrets = []
    for seed in range(50):
        inst, _ = gen_hard_experts(16, 1000 + seed)
        table = inst.loss_table()
        acts = inst.canonical_actions(T)
        played = simulate_main(OptimizableExperts(N, T, np.random.default_rng(seed)), table, acts,
                               inst.canonical_leaders(T), np.random.default_rng(seed + 1),
                               np.random.default_rng(seed + 2))
        f = table[:, acts]
        regrets.append((f[played, np.arange(T)].sum() - f.sum(axis=1).min()) / T)
    assert np.mean(regrets) <= bound


def test_oracle_driven_matches_table_driven():
    inst, oracle = gen_hard_experts(4, 3)
    T = 100
    acts = inst.canonical_actions(T)
    a = OptimizableExperts(16, T, np.random.default_rng(0))
    played_a = simulate_main(a, inst.loss_table(), acts, inst.canonical_leaders(T),
                             np.random.default_rng(1), np.random.default_rng(2))
    b = SelfOblivious(OptimizableExperts(16, T, np.random.default_rng(0)),
                      np.random.default_rng(1), np.random.default_rng(2))
    played_b = []
    for y in acts:
        played_b.append(b.play())
        b.observe_oracle(oracle, int(y))
    assert np.array_equal(played_a, played_b)
    assert oracle.opt_calls == T
    assert oracle.value_calls == T * a.queries_per_round


def test_wrapper_has_unwrapped_marginals():
    rng = np.random.default_rng(0)
    table = rng.random((12, 3))
    acts = rng.integers(0, 3, 80)
    leaders = np.argmin(np.cumsum(table[:, acts].T, axis=0), axis=1)
    inner = OptimizableExperts(12, 80, np.random.default_rng(5))
    wrapped = SelfOblivious(inner, np.random.default_rng(6), np.random.default_rng(7))
    bare = OptimizableExperts(12, 80, np.random.default_rng(5))
    p, u = np.random.default_rng(6), np.random.default_rng(7)
    for t in range(80):
        assert wrapped.play() == bare.play(p)
        wrapped.observe(lambda e: table[e, acts[t]], int(leaders[t]))
        bare.observe(lambda e: table[e, acts[t]], int(leaders[t]), u)


def test_wrapper_needs_fresh_learner():
    learner = OptimizableExperts(4, 10, np.random.default_rng(0))
    learner.observe(lambda e: np.zeros(len(e)), 0, np.random.default_rng(1))
    with pytest.raises(ExpertsError):
        SelfOblivious(learner, np.random.default_rng(2), np.random.default_rng(3))


def test_transcript_audit():
    ok, detail = transcript_audit()
    assert ok, detail


def test_adaptive_adversary_regret():
    N, T = 8, 4096
    bound = 40 * N ** 0.25 * math.log(N * T / 0.1) / math.sqrt(T)
    regrets = []
    for seed in range(20):
        base = np.random.default_rng(500 + seed).random((N, T))
        _, player, cum = simulate_main_adaptive(OptimizableExperts(N, T, np.random.default_rng(seed)), base, 0.5,
                                                np.random.default_rng(seed + 1), np.random.default_rng(seed + 2))
        regrets.append((player - cum.min()) / T)
    assert np.mean(regrets) <= bound


def test_adaptive_losses_follow_plays():
    N, T = 5, 300
    base = np.random.default_rng(0).random((N, T))
    learner = OptimizableExperts(N, T, np.random.default_rng(1))
    played, player, cum = simulate_main_adaptive(learner, base, 0.3, np.random.default_rng(2), np.random.default_rng(3))
    # recompute the adversary from the recorded plays
    f = 0.7 * base.copy()
    for t in range(1, T):
        f[played[t - 1], t] += 0.3
    assert player == pytest.approx(f[played, np.arange(T)].sum(), rel=1e-12)
    assert np.allclose(cum, f.sum(axis=1), rtol=1e-12)


def test_candidate_set_hits_top_experts():
    N, T, trials = 100, 100, 10_000
    top = set(range(10))
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(trials):
        members = new_main_state(N, T, rng).members
        hits += not top.isdisjoint(members.tolist())
    rate = hits / trials
    sigma = math.sqrt(max(rate * (1 - rate), 1.0 / trials) / trials)
    assert rate >= 1 - 1 / math.sqrt(T) - 3 * sigma


@pytest.mark.parametrize("N", [16, 256, 4096])
def test_oracle_call_budget(N):
    T = 256
    inst, oracle = gen_hard_experts(math.isqrt(N), 0)
    learner = SelfOblivious(OptimizableExperts(N, T, np.random.default_rng(0)),
                            np.random.default_rng(1), np.random.default_rng(2))
    for y in inst.canonical_actions(T):
        learner.play()
        learner.observe_oracle(oracle, int(y))
    total = oracle.value_calls + oracle.opt_calls
    assert total <= 4 * T * math.log2(N) ** 2 * math.log2(T)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_degenerate_sizes_run(N, T, seed):
    rng = np.random.default_rng(seed)
    table = rng.random((N, 2))
    acts = rng.integers(0, 2, T)
    learner = OptimizableExperts(N, T, np.random.default_rng(seed))
    assert learner.candidates.size >= 1
    played = simulate_main(learner, table, acts, np.zeros(T, dtype=int), rng, np.random.default_rng(seed + 1))
    assert played.size == T and played.max() < N
