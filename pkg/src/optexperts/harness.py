"""Experiment orchestration and result files.

An :class:`ExperimentSpec` describes a batch of independent trials.  Every
random stream of a trial comes from ``(base seed, trial id, label)``, so
trials can run in any order or in parallel and still produce the same
records.  Results are a CSV of checkpoint rows plus a JSON sidecar with
the experiment settings, package versions and oracle totals; wall-clock goes to a
separate ``.timing.json`` so the first two files are bit-stable.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ExpertsError, LeaderFeed
from .games import GameMatrix, checkpoint_rounds, fictitious_play, horizon_for, load_game, solve_game
from .instances import InstanceSpec, build_instance
from .leaders import Leaders, simulate_leaders
from .mw import MW1, MW2, MW3, simulate_mw1, simulate_mw2, simulate_mw3
from .optimizable import OptimizableExperts, simulate_main

MODES = ("experts-run", "game-solve", "instance-gen", "verify")
EXPERT_ALGS = ("mw1", "mw2", "mw3", "leaders", "main")
GAME_ALGS = ("main", "fictitious")
GAME_SOURCES = ("uniform", "constant", "matching")
CSV_HEADER = ["trial", "seed", "round", "metric", "value"]


def stream_seed(base: int, trial: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), int(trial), zlib.crc32(label.encode())])


def derive_seed(base: int, trial: int, label: str) -> int:
    """A u64 that depends only on ``(base, trial, label)``."""
    lo, hi = stream_seed(base, trial, label).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def trial_rng(base: int, trial: int, label: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(base, trial, label))


@dataclass
class ExperimentSpec:
    mode: str = "experts-run"
    alg: str = "main"
    instance: str = ""
    n: int = 0
    t: int = 0
    eps: float | None = None
    delta: float | None = None
    trials: int = 1
    seed: int = 0
    out: str = ""

    def validate(self) -> ExperimentSpec:
        def bad(msg):
            raise ExpertsError("spec-error", msg)

        if self.mode not in MODES:
            bad(f"unknown mode {self.mode!r}")
        if self.trials < 0:
            bad("trials must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            bad("seed must be a u64")
        if self.n < 0 or self.t < 0:
            bad("n and t must be >= 0")
        for name in ("eps", "delta"):
            v = getattr(self, name)
            if v is not None and not 0 < v < 1:
                bad(f"{name} must lie in (0, 1)")
        if self.mode == "experts-run":
            if self.alg not in EXPERT_ALGS:
                bad(f"unknown algorithm {self.alg!r}")
            if self.t < 1:
                bad("experts-run needs t >= 1")
            InstanceSpec.from_text(self.instance)
        if self.mode == "game-solve":
            if self.alg not in GAME_ALGS:
                bad(f"unknown game algorithm {self.alg!r}")
            if self.t < 1 and (self.eps is None or self.delta is None):
                bad("game-solve needs t or both eps and delta")
        return self

    def to_text(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> ExperimentSpec:
        try:
            data = json.loads(text)
            return cls(**data).validate()
        except (json.JSONDecodeError, TypeError) as exc:
            raise ExpertsError("spec-error", str(exc)) from None


@dataclass
class TrialRecord:
    trial: int
    seed: int
    checkpoints: list = field(default_factory=list)  # (round, metric, value)
    oracle_calls: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def values(self, metric: str) -> list[tuple[int, float]]:
        return [(r, v) for r, m, v in self.checkpoints if m == metric]


# ---------------------------------------------------------------- experts


def _learner_params(alg: str, N: int, T: int) -> dict:
    if alg == "mw1":
        return {"eta": math.sqrt(2 * math.log(N * T) / T), "gamma": 1.0 / T}
    if alg == "mw2":
        return {"eta": 2 * math.sqrt(math.log(N * T) / (N * T)), "gamma": 1.0 / T}
    if alg == "mw3":
        k = max(1, math.isqrt(N))
        return {"k": k, "eta": math.sqrt(4 * math.log(k * T) / (k * T)), "gamma": 1.0 / T}
    if alg == "leaders":
        return {"L": max(1, math.isqrt(N))}
    return {}


def regret_checkpoints(table, actions, played, rounds) -> list[float]:
    """Average regret after each round in ``rounds`` (increasing)."""
    player = np.cumsum(table[played, actions])
    comp = np.zeros(table.shape[0])
    out = []
    prev = 0
    for r in rounds:
        comp += table[:, actions[prev:r]].sum(axis=1)
        prev = r
        out.append(float((player[r - 1] - comp.min()) / r))
    return out


def run_expert_trial(spec: ExperimentSpec, trial: int) -> TrialRecord:
    ispec = InstanceSpec.from_text(spec.instance)
    if ispec.family == "aldous":
        raise ExpertsError("spec-error", "aldous is a game family; use run-game")
    seed = derive_seed(spec.seed, trial, "trial")
    t0 = time.perf_counter()
    inst, oracle = build_instance(ispec)
    N, T = inst.N, spec.t
    actions = inst.canonical_actions(T)
    table = np.stack([oracle.losses(a) for a in range(getattr(oracle, "num_actions", N))], axis=1)
    feed = LeaderFeed(oracle)
    leaders = np.array([feed.append(a) for a in actions], dtype=np.int64)
    play_rng = trial_rng(spec.seed, trial, "play")
    update_rng = trial_rng(spec.seed, trial, "update")
    p = _learner_params(spec.alg, N, T)
    t1 = time.perf_counter()
    if spec.alg == "mw1":
        learner = MW1(N, p["eta"], p["gamma"])
        played = simulate_mw1(learner, table, actions, play_rng)
        value_calls = N * T
    elif spec.alg == "mw2":
        learner = MW2(N, p["eta"], p["gamma"])
        played = simulate_mw2(learner, table, actions, play_rng, update_rng)
        value_calls = learner.value_calls
    elif spec.alg == "mw3":
        learner = MW3(N, p["k"], p["eta"], p["gamma"])
        played = simulate_mw3(learner, table, actions, leaders, play_rng, update_rng)
        value_calls = learner.value_calls
    elif spec.alg == "leaders":
        learner = Leaders(N, p["L"], T)
        played = simulate_leaders(learner, table, actions, leaders, play_rng, update_rng)
        value_calls = learner.value_calls
    else:
        learner = OptimizableExperts(N, T, trial_rng(spec.seed, trial, "candidates"))
        played = simulate_main(learner, table, actions, leaders, play_rng, update_rng)
        value_calls = learner.value_calls
    t2 = time.perf_counter()
    rounds = checkpoint_rounds(T)
    regrets = regret_checkpoints(table, actions, played, rounds)
    t3 = time.perf_counter()
    return TrialRecord(
        trial=trial, seed=seed,
        checkpoints=[(int(r), "avg_regret", v) for r, v in zip(rounds, regrets)],
        oracle_calls={"value_calls": int(value_calls), "opt_calls": oracle.opt_calls},
        timing={"setup": t1 - t0, "run": t2 - t1, "evaluate": t3 - t2},
    )


def _map_trials(fn, spec, workers):
    ids = list(range(spec.trials))
    if workers <= 1 or len(ids) <= 1:
        return [fn(spec, i) for i in ids]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        recs = list(pool.map(fn, [spec] * len(ids), ids))
    return sorted(recs, key=lambda r: r.trial)


def run_experts(spec: ExperimentSpec, workers: int = 1) -> list[TrialRecord]:
    spec = ExperimentSpec(**{**asdict(spec), "mode": "experts-run"}).validate()
    return _map_trials(run_expert_trial, spec, workers)


# ------------------------------------------------------------------ games


def game_from_source(source: str, N: int, rng) -> GameMatrix:
    """``uniform``, ``constant``, ``matching``, ``file:<path>`` or an aldous instance spec."""
    if source.startswith("file:"):
        return load_game(source[5:])
    if source.startswith("family="):
        ispec = InstanceSpec.from_text(source)
        if ispec.family != "aldous":
            raise ExpertsError("spec-error", "only the aldous family is a game")
        return build_instance(ispec)[1]
    if source not in GAME_SOURCES:
        raise ExpertsError("spec-error", f"unknown game source {source!r}")
    if N < 1:
        raise ExpertsError("spec-error", "game source needs n >= 1")
    if source == "uniform":
        return GameMatrix(rng.random((N, N)))
    if source == "constant":
        return GameMatrix(np.full((N, N), 0.5))
    return GameMatrix(np.eye(N))


def game_horizon(spec: ExperimentSpec, N: int) -> int:
    return spec.t if spec.t >= 1 else horizon_for(N, spec.eps, spec.delta)


def run_game_trial(spec: ExperimentSpec, trial: int) -> TrialRecord:
    seed = derive_seed(spec.seed, trial, "trial")
    t0 = time.perf_counter()
    game = game_from_source(spec.instance or "uniform", spec.n, trial_rng(spec.seed, trial, "instance"))
    T = game_horizon(spec, game.N)
    t1 = time.perf_counter()
    rng = trial_rng(spec.seed, trial, "solve")
    rep = solve_game(game, T, rng) if spec.alg == "main" else fictitious_play(game, T, rng)
    t2 = time.perf_counter()
    cks = [(r, "duality_gap", g) for r, g in rep.checkpoints if not math.isnan(g)]
    cks.append((T, "value", rep.value))
    return TrialRecord(trial=trial, seed=seed, checkpoints=cks, oracle_calls=dict(rep.oracle_calls),
                       timing={"setup": t1 - t0, "run": t2 - t1})


def run_game(spec: ExperimentSpec, workers: int = 1) -> list[TrialRecord]:
    spec = ExperimentSpec(**{**asdict(spec), "mode": "game-solve"}).validate()
    return _map_trials(run_game_trial, spec, workers)


# ----------------------------------------------------------------- output


def versions() -> dict:
    import numba

    from . import __version__

    return {"artifact": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def emit_results(records, path, spec: ExperimentSpec | None = None) -> None:
    """CSV of checkpoint rows, ``<path>.json`` sidecar, ``<path>.timing.json``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for rec in records:
                for r, metric, v in rec.checkpoints:
                    w.writerow([rec.trial, rec.seed, r, metric, repr(float(v))])
        side = {
            "spec": asdict(spec) if spec is not None else None,
            "versions": versions(),
            "oracle_calls": {str(rec.trial): rec.oracle_calls for rec in records},
        }
        Path(f"{path}.json").write_text(json.dumps(side, sort_keys=True, indent=2) + "\n")
        timing = {str(rec.trial): rec.timing for rec in records}
        Path(f"{path}.timing.json").write_text(json.dumps(timing, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> list[tuple[int, int, int, str, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != CSV_HEADER:
        raise ExpertsError("format", f"{path}: unexpected header")
    return [(int(a), int(b), int(c), m, float(v)) for a, b, c, m, v in rows[1:]]
