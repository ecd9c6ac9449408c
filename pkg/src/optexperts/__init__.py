"""Online learning with optimizable experts and zero-sum games with best-response oracles."""

__version__ = "0.1.0"

from .core import (
    ExpertsError,
    LeaderFeed,
    OraclePair,
    RegretLedger,
    TableOracle,
    compute_leader,
    update_ledger,
)
from .games import (
    EquilibriumReport,
    GameMatrix,
    fictitious_play,
    horizon_for,
    load_game,
    save_game,
    solve_game,
    verify_equilibrium,
)
from .leaders import Leaders
from .mw import MW1, MW2, MW3, SlidingBuffer
from .optimizable import OptimizableExperts, SelfOblivious
from .sampling import MixedWeights, SumTree

__all__ = [
    "EquilibriumReport", "ExpertsError", "GameMatrix", "LeaderFeed", "Leaders", "MW1", "MW2", "MW3",
    "MixedWeights", "OptimizableExperts", "OraclePair", "RegretLedger", "SelfOblivious",
    "SlidingBuffer", "SumTree", "TableOracle", "compute_leader", "fictitious_play", "horizon_for",
    "load_game", "save_game", "solve_game", "update_ledger", "verify_equilibrium",
]
