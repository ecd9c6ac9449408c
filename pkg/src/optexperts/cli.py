"""Command-line entry point: ``optexperts <subcommand> ...``.

Exit codes: 0 success, 1 profile not verified (``verify-eq``), 2 bad
arguments or spec, 3 acceptance failure (``bench``).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import ExpertsError
from .games import save_game, solve_game, verify_equilibrium
from .harness import (
    ExperimentSpec,
    emit_results,
    game_from_source,
    game_horizon,
    run_experts,
    run_game,
    trial_rng,
)
from .instances import FAMILIES, InstanceSpec, build_instance


def _instance_text(args) -> str:
    """Accept a full ``family=... n=... d=... seed=...`` string or a bare family name."""
    text = args.instance or ""
    if "=" in text:
        return text
    if text not in FAMILIES:
        raise ExpertsError("spec-error", f"unknown instance {text!r}")
    return InstanceSpec(text, args.n, args.d, args.seed).to_text()


def _spec(args, mode, instance) -> ExperimentSpec:
    return ExperimentSpec(mode=mode, alg=args.alg, instance=instance, n=args.n, t=args.t, eps=args.eps,
                          delta=args.delta, trials=args.trials, seed=args.seed, out=args.out or "").validate()


def _summarize(records, metric):
    finals = [rec.values(metric)[-1][1] for rec in records if rec.values(metric)]
    if finals:
        print(f"{len(finals)} trials, final {metric}: mean {np.mean(finals):.6g}, median {np.median(finals):.6g}")


def cmd_run_experts(args) -> int:
    spec = _spec(args, "experts-run", _instance_text(args))
    records = run_experts(spec, workers=args.workers)
    if spec.out:
        emit_results(records, spec.out, spec)
    _summarize(records, "avg_regret")
    return 0


def cmd_run_game(args) -> int:
    spec = _spec(args, "game-solve", args.instance or "uniform")
    records = run_game(spec, workers=args.workers)
    if spec.out:
        emit_results(records, spec.out, spec)
    _summarize(records, "duality_gap")
    return 0


def cmd_gen_instance(args) -> int:
    ispec = InstanceSpec.from_text(_instance_text(args))
    inst, obj = build_instance(ispec)
    print(ispec.to_text())
    if args.out:
        if ispec.family == "aldous":
            save_game(args.out, obj.dense())
        else:
            n_actions = getattr(obj, "num_actions", inst.N)
            table = np.stack([obj.losses(a) for a in range(n_actions)], axis=1)
            np.savetxt(args.out, table, delimiter=",", fmt="%.17g")
    return 0


def _load_profile(path):
    with open(path) as fh:
        data = json.load(fh)
    try:
        return [(int(i), float(m)) for i, m in data["p"]], [(int(j), float(m)) for j, m in data["q"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ExpertsError("spec-error", f"{path}: bad profile ({exc})") from None


def cmd_verify_eq(args) -> int:
    if args.eps is None:
        raise ExpertsError("spec-error", "verify-eq needs --eps")
    game = game_from_source(args.instance or "uniform", args.n, trial_rng(args.seed, 0, "instance"))
    if args.profile:
        p, q = _load_profile(args.profile)
    else:
        spec = ExperimentSpec(mode="game-solve", t=args.t, eps=args.eps, delta=args.delta or 0.1)
        rep = solve_game(game, game_horizon(spec, game.N), trial_rng(args.seed, 0, "solve"))
        p, q = rep.p, rep.q
    ok, rep = verify_equilibrium(game, p, q, args.eps)
    print(f"value {rep.value:.6g}; row exploitability {rep.row_exploitability:.6g}; "
          f"column exploitability {rep.col_exploitability:.6g}; eps {args.eps}: {'verified' if ok else 'NOT verified'}")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    from .acceptance import run_checks

    only = [int(k) for k in args.only.split(",")] if args.only else None
    results = run_checks(only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alg", default="main", help="mw1, mw2, mw3, leaders, main (games: main, fictitious)")
    common.add_argument("--instance", help="instance spec, family name, or game source")
    common.add_argument("--n", type=int, default=0, help="block size or game size")
    common.add_argument("--d", type=int, default=0, help="hypercube dimension (aldous family)")
    common.add_argument("--t", type=int, default=0, help="horizon")
    common.add_argument("--eps", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path")
    common.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="optexperts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run-experts", parents=[common], help="run a learner against an instance").set_defaults(fn=cmd_run_experts)
    sub.add_parser("run-game", parents=[common], help="solve games").set_defaults(fn=cmd_run_game)
    sub.add_parser("gen-instance", parents=[common], help="print and optionally save an instance").set_defaults(fn=cmd_gen_instance)
    v = sub.add_parser("verify-eq", parents=[common], help="check a profile is an eps-equilibrium")
    v.add_argument("--profile", help='JSON file {"p": [[i, mass], ...], "q": [[j, mass], ...]}')
    v.set_defaults(fn=cmd_verify_eq)
    b = sub.add_parser("bench", help="run the acceptance checks")
    b.add_argument("--only", help="comma-separated criterion numbers")
    b.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ExpertsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
