"""Shared model pieces: oracles, leader tracking and regret bookkeeping.

Experts are integers in ``[0, N)``.  Adversary actions are opaque integer
handles interpreted by an :class:`OraclePair`.  A sparse distribution over
actions (or over strategies in the game setting) is a sorted list of
``(index, mass)`` atoms whose masses sum to one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ATOM_TOL = 1e-9
TIE_TOL = 1e-12


class ExpertsError(ValueError):
    """Domain error carrying a short machine-readable ``code``."""

    def __init__(self, code, detail=""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


Atoms = Sequence[tuple[int, float]]


def check_atoms(atoms: Atoms, size: int | None = None) -> list[tuple[int, float]]:
    """Validate a sparse distribution; it is checked, never repaired."""
    out = [(int(i), float(m)) for i, m in atoms]
    if not out:
        raise ExpertsError("empty-support", "distribution has no atoms")
    idx = [i for i, _ in out]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ExpertsError("atoms", "indices must be strictly increasing")
    if any(m <= 0 or not np.isfinite(m) for _, m in out):
        raise ExpertsError("atoms", "masses must be positive")
    if size is not None and (idx[0] < 0 or idx[-1] >= size):
        raise ExpertsError("atoms", "index out of range")
    if abs(sum(m for _, m in out) - 1.0) > ATOM_TOL:
        raise ExpertsError("atoms", "masses must sum to 1")
    return out


def empirical_atoms(counts: dict[int, int] | np.ndarray) -> list[tuple[int, float]]:
    """Atoms of the empirical distribution given occurrence counts."""
    if isinstance(counts, dict):
        items = sorted((k, v) for k, v in counts.items() if v > 0)
    else:
        nz = np.flatnonzero(counts)
        items = [(int(i), int(counts[i])) for i in nz]
    total = sum(v for _, v in items)
    return [(i, v / total) for i, v in items]


class OraclePair:
    """Value and optimization oracles over ``num_experts`` experts.

    Subclasses implement :meth:`_value` (vectorised over experts) and
    :meth:`_opt`.  The public methods meter every call; the counters only
    ever grow.
    """

    def __init__(self, num_experts: int):
        self.num_experts = int(num_experts)
        self.value_calls = 0
        self.opt_calls = 0
        self._touched = np.zeros(self.num_experts, dtype=bool)

    @property
    def distinct_touched(self) -> int:
        return int(self._touched.sum())

    def counters(self) -> dict:
        return {
            "value_calls": self.value_calls,
            "opt_calls": self.opt_calls,
            "distinct_touched": self.distinct_touched,
        }

    def value(self, expert, action):
        """Loss of ``expert`` (int or int array) against ``action``."""
        experts = np.asarray(expert, dtype=np.int64)
        self.value_calls += experts.size
        self._touched[experts] = True
        out = self._value(experts, int(action))
        return float(out) if np.ndim(expert) == 0 else np.asarray(out, dtype=float)

    def opt(self, atoms: Atoms) -> int:
        """An expert minimising the expected loss under ``atoms``."""
        atoms = check_atoms(atoms)
        self.opt_calls += 1
        return int(self._opt(atoms))

    def loss_of(self, action) -> Callable[[np.ndarray], np.ndarray]:
        """Metered per-expert loss accessor for one round."""
        return lambda experts: self.value(np.asarray(experts), action)

    def losses(self, action) -> np.ndarray:
        """Dense loss vector for ``action`` without metering (harness side)."""
        return np.asarray(self._value(np.arange(self.num_experts), int(action)), dtype=float)

    def _value(self, experts: np.ndarray, action: int) -> np.ndarray:
        raise NotImplementedError

    def _opt(self, atoms: list[tuple[int, float]]) -> int:
        raise NotImplementedError


class TableOracle(OraclePair):
    """Oracles backed by a dense ``N x A`` loss table; Opt is a linear scan."""

    def __init__(self, table):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2:
            raise ExpertsError("loss-range", "loss table must be 2-D")
        if np.any(table < 0) or np.any(table > 1):
            raise ExpertsError("loss-range", "losses must lie in [0, 1]")
        super().__init__(table.shape[0])
        self.table = table
        self.num_actions = table.shape[1]

    def _value(self, experts, action):
        return self.table[experts, action]

    def _opt(self, atoms):
        idx = np.array([i for i, _ in atoms])
        mass = np.array([m for _, m in atoms])
        expected = self.table[:, idx] @ mass
        # sums in a different order can split exact ties by an ulp, so
        # near-equal values count as tied and the lowest index wins
        best = expected.min()
        return int(np.flatnonzero(expected <= best + TIE_TOL * max(1.0, abs(best)))[0])


def compute_leader(history: Sequence[int], oracle: OraclePair) -> int:
    """Leader after ``history``: one Opt call on its empirical distribution."""
    if len(history) == 0:
        raise ExpertsError("no-rounds", "history is empty")
    counts: dict[int, int] = {}
    for a in history:
        counts[int(a)] = counts.get(int(a), 0) + 1
    return oracle.opt(empirical_atoms(counts))


class LeaderFeed:
    """Append-only action history with the running leader.

    Counts are kept incrementally so each round costs a single Opt call on
    the current empirical distribution.
    """

    def __init__(self, oracle: OraclePair):
        self.oracle = oracle
        self.history: list[int] = []
        self._counts: dict[int, int] = {}
        self.current_leader: int | None = None

    def append(self, action: int) -> int:
        action = int(action)
        self.history.append(action)
        self._counts[action] = self._counts.get(action, 0) + 1
        self.current_leader = self.oracle.opt(empirical_atoms(self._counts))
        return self.current_leader


def _neumaier_add(total, comp, value):
    t = total + value
    big = np.abs(total) >= np.abs(value)
    comp = comp + np.where(big, (total - t) + value, (value - t) + total)
    return t, comp


@dataclass
class RegretLedger:
    """Cumulative losses of the player and of every fixed expert.

    Sums are compensated so million-round ledgers stay accurate.
    """

    num_experts: int
    round: int = 0
    _player: float = 0.0
    _player_c: float = 0.0
    _comp: np.ndarray = field(default=None, repr=False)
    _comp_c: np.ndarray = field(default=None, repr=False)
    oracle_calls: dict = field(default_factory=dict)

    def __post_init__(self):
        if self._comp is None:
            self._comp = np.zeros(self.num_experts)
            self._comp_c = np.zeros(self.num_experts)

    @property
    def player_cum_loss(self) -> float:
        return self._player + self._player_c

    @property
    def comparator_cum_loss(self) -> np.ndarray:
        return self._comp + self._comp_c

    def best_in_hindsight(self) -> float:
        return float(self.comparator_cum_loss.min())

    def regret(self) -> float:
        return self.player_cum_loss - self.best_in_hindsight()

    def average_regret(self) -> float:
        if self.round == 0:
            return 0.0
        return self.regret() / self.round


def update_ledger(ledger: RegretLedger, played: int, losses, oracle: OraclePair | None = None) -> RegretLedger:
    """Charge one round: the played expert's loss and every comparator's."""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (ledger.num_experts,):
        raise ExpertsError("loss-range", "need one loss per expert")
    if np.any(losses < 0) or np.any(losses > 1) or not np.all(np.isfinite(losses)):
        raise ExpertsError("loss-range", "losses must lie in [0, 1]")
    if not 0 <= played < ledger.num_experts:
        raise ExpertsError("expert-range", f"expert {played} not in [0, {ledger.num_experts})")
    p, c = _neumaier_add(np.float64(ledger._player), np.float64(ledger._player_c), losses[played])
    ledger._player, ledger._player_c = float(p), float(c)
    ledger._comp, ledger._comp_c = _neumaier_add(ledger._comp, ledger._comp_c, losses)
    ledger.round += 1
    if oracle is not None:
        ledger.oracle_calls = oracle.counters()
    return ledger


def check_losses(losses: Iterable[float]) -> np.ndarray:
    arr = np.asarray(losses, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ExpertsError("loss-range", "losses must be finite and nonnegative")
    return arr
