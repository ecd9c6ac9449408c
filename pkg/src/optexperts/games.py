"""Zero-sum games with best-response oracles.

The row player minimises and the column player maximises ``p^T G q``.
Both players run :class:`~optexperts.optimizable.OptimizableExperts`; each
player's leader is its best response to the opponent's empirical play.
The column learner sees the loss ``1 - G(x_t, j)`` so both learners work
on losses in ``[0, 1]``.

Dense games go through a compiled loop that keeps ``G q_count`` and
``p_count^T G`` up to date in O(N) per round.  Any other
:class:`GameMatrix` (for example the hypercube games in
:mod:`optexperts.instances`) runs through the metered Python path.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import ExpertsError, check_atoms, empirical_atoms
from .optimizable import (
    OptimizableExperts,
    main_apply,
    main_play,
    main_queries,
)

MAGIC = b"ZSG1"


class GameMatrix:
    """``N x N`` payoff table with metered value and best-response oracles.

    Subclasses that do not hold a dense table override :meth:`_value`,
    :meth:`_br_row` and :meth:`_br_col`.  Ties go to the lowest index.
    """

    def __init__(self, payoff=None, size=None):
        if payoff is not None:
            payoff = np.asarray(payoff, dtype=float)
            if payoff.ndim != 2 or payoff.shape[0] != payoff.shape[1]:
                raise ExpertsError("payoff-range", "payoff must be a square matrix")
            if not np.all(np.isfinite(payoff)) or payoff.min() < 0 or payoff.max() > 1:
                raise ExpertsError("payoff-range", "payoffs must lie in [0, 1]")
            size = payoff.shape[0]
        self.payoff = payoff
        self.N = int(size)
        self.value_calls = 0
        self.br_row_calls = 0
        self.br_col_calls = 0

    def counters(self) -> dict:
        return {"value_calls": self.value_calls, "br_row_calls": self.br_row_calls,
                "br_col_calls": self.br_col_calls}

    def value(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        self.value_calls += int(np.broadcast(i, j).size)
        out = self._value(i, j)
        return float(out) if np.ndim(out) == 0 else out

    def br_row(self, q) -> int:
        """Row minimising ``e_i^T G q``."""
        q = check_atoms(q, self.N)
        self.br_row_calls += 1
        return int(self._br_row(q))

    def br_col(self, p) -> int:
        """Column maximising ``p^T G e_j``."""
        p = check_atoms(p, self.N)
        self.br_col_calls += 1
        return int(self._br_col(p))

    def _value(self, i, j):
        return self.payoff[i, j]

    def _br_row(self, q):
        idx, mass = _split(q)
        return np.argmin(self.payoff[:, idx] @ mass)

    def _br_col(self, p):
        idx, mass = _split(p)
        return np.argmax(mass @ self.payoff[idx, :])


def _split(atoms):
    return np.array([i for i, _ in atoms], dtype=np.int64), np.array([m for _, m in atoms])


@dataclass
class EquilibriumReport:
    p: list
    q: list
    value: float
    row_exploitability: float
    col_exploitability: float
    rounds: int = 0
    oracle_calls: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)  # (round, duality gap)

    @property
    def duality_gap(self) -> float:
        return self.row_exploitability + self.col_exploitability


def evaluate_profile(game: GameMatrix, p, q) -> EquilibriumReport:
    """Exploitabilities of ``(p, q)`` by scanning every pure deviation.

    Uses ``N * (|p| + |q|)`` metered value queries.
    """
    p = check_atoms(p, game.N)
    q = check_atoms(q, game.N)
    pi, pm = _split(p)
    qi, qm = _split(q)
    rows = np.arange(game.N)
    Gq = game.value(rows[:, None], qi[None, :]) @ qm  # e_i^T G q for every i
    pG = pm @ game.value(pi[:, None], rows[None, :])  # p^T G e_j for every j
    v = float(pm @ Gq[pi])
    return EquilibriumReport(
        p=p, q=q, value=v,
        row_exploitability=max(0.0, v - float(Gq.min())),
        col_exploitability=max(0.0, float(pG.max()) - v),
    )


def verify_equilibrium(game: GameMatrix, p, q, eps: float) -> tuple[bool, EquilibriumReport]:
    """Whether ``p^T G e_j - eps <= p^T G q <= e_i^T G q + eps`` for all ``i, j``."""
    rep = evaluate_profile(game, p, q)
    ok = rep.row_exploitability <= eps + 1e-12 and rep.col_exploitability <= eps + 1e-12
    return ok, rep


def horizon_for(N: int, eps: float, delta: float) -> int:
    """Rounds that guarantee an ``eps``-equilibrium with probability ``1 - delta``."""
    if N < 1 or not 0 < eps < 1 or not 0 < delta < 1:
        raise ExpertsError("param-domain", "need N >= 1 and eps, delta in (0, 1)")
    return math.ceil(240.0 ** 2 * math.sqrt(N) / eps ** 2 * math.log(240.0 * N / (eps * delta)) ** 2)


def checkpoint_rounds(T: int) -> np.ndarray:
    """Powers of two below ``T``, then ``T``."""
    out = []
    c = 1
    while c < T:
        out.append(c)
        c *= 2
    out.append(T)
    return np.array(out, dtype=np.int64)


# ------------------------------------------------------------- dense solver


@njit(cache=True)
def _argmin_first(v):
    best = 0
    for i in range(1, v.size):
        if v[i] < v[best]:
            best = i
    return best


@njit(cache=True)
def _argmax_first(v):
    best = 0
    for i in range(1, v.size):
        if v[i] > v[best]:
            best = i
    return best


@njit(cache=True)
def _record(Gq, pG, rowcnt, t, ck_gap, k):
    inv = 1.0 / t
    v = 0.0
    for i in range(rowcnt.size):
        v += rowcnt[i] * Gq[i]
    v *= inv * inv
    lo = Gq[_argmin_first(Gq)] * inv
    hi = pG[_argmax_first(pG)] * inv
    ck_gap[k, 0] = v
    ck_gap[k, 1] = max(0.0, v - lo)
    ck_gap[k, 2] = max(0.0, hi - v)


@njit(cache=True)
def _solve_dense(G, rs, cs, rplay, rupd, cplay, cupd, rowcnt, colcnt, ck_rounds, ck_gap, ck_rows, ck_cols):
    n = G.shape[0]
    T = ck_rounds[ck_rounds.size - 1]
    Gq = np.zeros(n)
    pG = np.zeros(n)
    qr = np.empty(3 + rs.ld.dims[0] * rs.ld.dims[1] * 2, dtype=np.int64)
    qc = np.empty(3 + cs.ld.dims[0] * cs.ld.dims[1] * 2, dtype=np.int64)
    lr = np.empty(qr.size)
    lc = np.empty(qc.size)
    k = 0
    for t in range(T):
        x = main_play(rs, rplay)
        y = main_play(cs, cplay)
        rowcnt[x] += 1
        colcnt[y] += 1
        for i in range(n):
            Gq[i] += G[i, y]
            pG[i] += G[x, i]
        x_lead = _argmin_first(Gq)
        y_lead = _argmax_first(pG)
        main_queries(rs, rupd, qr)
        for i in range(qr.size):
            lr[i] = G[qr[i], y]
        main_queries(cs, cupd, qc)
        for i in range(qc.size):
            lc[i] = 1.0 - G[x, qc[i]]
        main_apply(rs, lr, x_lead)
        main_apply(cs, lc, y_lead)
        if t + 1 == ck_rounds[k]:
            _record(Gq, pG, rowcnt, t + 1, ck_gap, k)
            ck_rows[k] = rowcnt
            ck_cols[k] = colcnt
            k += 1


@njit(cache=True)
def _fictitious_dense(G, rs, rplay, rupd, rowcnt, colcnt, ck_rounds, ck_gap):
    n = G.shape[0]
    T = ck_rounds[ck_rounds.size - 1]
    Gq = np.zeros(n)
    pG = np.zeros(n)
    qr = np.empty(3 + rs.ld.dims[0] * rs.ld.dims[1] * 2, dtype=np.int64)
    lr = np.empty(qr.size)
    k = 0
    for t in range(T):
        x = main_play(rs, rplay)
        # column best-responds to the row player's past plays (column 0 first)
        y = _argmax_first(pG) if t > 0 else 0
        rowcnt[x] += 1
        colcnt[y] += 1
        for i in range(n):
            Gq[i] += G[i, y]
            pG[i] += G[x, i]
        main_queries(rs, rupd, qr)
        for i in range(qr.size):
            lr[i] = G[qr[i], y]
        main_apply(rs, lr, _argmin_first(Gq))
        if t + 1 == ck_rounds[k]:
            _record(Gq, pG, rowcnt, t + 1, ck_gap, k)
            k += 1


def _player_streams(rng):
    # candidate sets, row play, row update, column play, column update
    return rng.spawn(5)


@dataclass
class SolveTrace:
    """Per-checkpoint values from a solve: rounds, gaps and count snapshots."""

    rounds: np.ndarray
    value: np.ndarray
    row_exploitability: np.ndarray
    col_exploitability: np.ndarray
    row_counts: np.ndarray | None = None
    col_counts: np.ndarray | None = None

    @property
    def duality_gap(self) -> np.ndarray:
        return self.row_exploitability + self.col_exploitability


def solve_game(game: GameMatrix, T: int, rng, trace: bool = False):
    """Both players learn with best-response leaders for ``T`` rounds.

    Returns the report for the empirical profile, plus a :class:`SolveTrace`
    when ``trace`` is set.
    """
    if T < 1:
        raise ExpertsError("horizon", "need T >= 1")
    init, rplay, rupd, cplay, cupd = _player_streams(rng)
    row = OptimizableExperts(game.N, T, init)
    col = OptimizableExperts(game.N, T, init)
    ck = checkpoint_rounds(T)
    if game.payoff is not None:
        rowcnt = np.zeros(game.N, dtype=np.int64)
        colcnt = np.zeros(game.N, dtype=np.int64)
        gaps = np.zeros((ck.size, 3))
        ck_rows = np.zeros((ck.size, game.N), dtype=np.int64)
        ck_cols = np.zeros((ck.size, game.N), dtype=np.int64)
        _solve_dense(np.ascontiguousarray(game.payoff), row.state, col.state,
                     rplay, rupd, cplay, cupd, rowcnt, colcnt, ck, gaps, ck_rows, ck_cols)
        # model cost: one BR call per player per round, queries as metered
        game.br_row_calls += T
        game.br_col_calls += T
        game.value_calls += T * (row.queries_per_round + col.queries_per_round)
        tr = SolveTrace(ck, gaps[:, 0], gaps[:, 1], gaps[:, 2], ck_rows, ck_cols)
    else:
        rowcnt, colcnt, tr = _solve_generic(game, T, row, col, rplay, rupd, cplay, cupd, ck)
    rep = _report(game, rowcnt, colcnt, T, tr)
    return (rep, tr) if trace else rep


def _solve_generic(game, T, row, col, rplay, rupd, cplay, cupd, ck):
    rowcnt = np.zeros(game.N, dtype=np.int64)
    colcnt = np.zeros(game.N, dtype=np.int64)
    rows_ck, cols_ck = [], []
    k = 0
    for t in range(T):
        x = row.play(rplay)
        y = col.play(cplay)
        rowcnt[x] += 1
        colcnt[y] += 1
        x_lead = game.br_row(empirical_atoms(colcnt))
        y_lead = game.br_col(empirical_atoms(rowcnt))
        row.observe(lambda e: game.value(e, y), x_lead, rupd)
        col.observe(lambda e: 1.0 - game.value(x, e), y_lead, cupd)
        if t + 1 == ck[k]:
            rows_ck.append(rowcnt.copy())
            cols_ck.append(colcnt.copy())
            k += 1
    rows_ck = np.array(rows_ck)
    cols_ck = np.array(cols_ck)
    gaps = np.zeros((ck.size, 3))
    # dense-free exploitability at each checkpoint is an exhaustive scan;
    # only the final one is computed here
    gaps[:] = np.nan
    return rowcnt, colcnt, SolveTrace(ck, gaps[:, 0], gaps[:, 1], gaps[:, 2], rows_ck, cols_ck)


def _report(game, rowcnt, colcnt, T, tr):
    calls = game.counters()
    rep = evaluate_profile(game, empirical_atoms(rowcnt), empirical_atoms(colcnt))
    # the exhaustive scan above is verification, not model cost
    game.value_calls = calls["value_calls"]
    rep.rounds = T
    rep.oracle_calls = calls
    if np.isnan(tr.value[-1]):
        tr.value[-1] = rep.value
        tr.row_exploitability[-1] = rep.row_exploitability
        tr.col_exploitability[-1] = rep.col_exploitability
    rep.checkpoints = [(int(r), float(g)) for r, g in zip(tr.rounds, tr.duality_gap)]
    return rep


def fictitious_play(game: GameMatrix, T: int, rng) -> EquilibriumReport:
    """Row player learns; the column player best-responds to the row history.

    The first column play is column 0.
    """
    if T < 1:
        raise ExpertsError("horizon", "need T >= 1")
    init, rplay, rupd, _, _ = _player_streams(rng)
    row = OptimizableExperts(game.N, T, init)
    ck = checkpoint_rounds(T)
    rowcnt = np.zeros(game.N, dtype=np.int64)
    colcnt = np.zeros(game.N, dtype=np.int64)
    if game.payoff is not None:
        gaps = np.zeros((ck.size, 3))
        _fictitious_dense(np.ascontiguousarray(game.payoff), row.state, rplay, rupd, rowcnt, colcnt, ck, gaps)
        game.br_row_calls += T
        game.br_col_calls += T - 1
        game.value_calls += T * row.queries_per_round
        tr = SolveTrace(ck, gaps[:, 0], gaps[:, 1], gaps[:, 2])
    else:
        for t in range(T):
            x = row.play(rplay)
            y = game.br_col(empirical_atoms(rowcnt)) if t > 0 else 0
            rowcnt[x] += 1
            colcnt[y] += 1
            row.observe(lambda e: game.value(e, y), game.br_row(empirical_atoms(colcnt)), rupd)
        nan = np.full(ck.size, np.nan)
        tr = SolveTrace(ck, nan.copy(), nan.copy(), nan.copy())
    return _report(game, rowcnt, colcnt, T, tr)


# ------------------------------------------------------------------ file IO


def save_game(path, payoff) -> None:
    """Write ``ZSG1`` + uint32 LE ``N`` + ``N*N`` float64 LE, row-major."""
    payoff = np.ascontiguousarray(payoff, dtype="<f8")
    n = payoff.shape[0]
    if payoff.shape != (n, n):
        raise ExpertsError("payoff-range", "payoff must be square")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", n))
        fh.write(payoff.tobytes())


def load_game(path) -> GameMatrix:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8 or head[:4] != MAGIC:
            raise ExpertsError("format", f"{path}: not a ZSG1 file")
        (n,) = struct.unpack("<I", head[4:])
        body = fh.read()
    if len(body) != 8 * n * n:
        raise ExpertsError("format", f"{path}: expected {n * n} payoffs")
    return GameMatrix(np.frombuffer(body, dtype="<f8").reshape(n, n).copy())


def random_game(N: int, rng) -> GameMatrix:
    return GameMatrix(rng.random((N, N)))
