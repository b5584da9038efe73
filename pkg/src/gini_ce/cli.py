"""Command-line driver: standalone normal-form solves, JPSRO runs, trace reports.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 JPSRO did not
converge within its budget.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import jpsro, meta_solvers, mgce
from .efg import games as efg_games
from .errors import ConfigError, GiniCeError
from .normal_form import (BUILTIN_GAMES, CCE, CE, build_constraints, constraint_violation,
                          gini_impurity, load_game)

LOG_ENV = "GINI_CE_LOG"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NOT_CONVERGED = 0, 2, 3, 4

EPSILON_MODE_FLAGS = {
    "fixed": "fixed",
    "max-ab": "max_ab",
    "half-max-ab": "half_max_ab",
    "full-support": "full_support_min",
    "min": "min_epsilon",
}

# Solvers that go straight to the Gini QP with the full epsilon family.
GINI_SOLVERS = {"mgce": CE, "mgcce": CCE}

log = logging.getLogger("gini_ce.cli")


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _parse_params(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"game parameter {item!r} is not key=value")
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def make_normal_form(spec: str, params: dict):
    if spec in BUILTIN_GAMES:
        if params:
            raise ConfigError(f"built-in game {spec!r} takes no parameters")
        return BUILTIN_GAMES[spec]()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"game {spec!r} is neither built-in ({sorted(BUILTIN_GAMES)}) nor a file")
    return load_game(path)


def make_tree(name: str, params: dict):
    if name in ("kuhn2p", "kuhn3p"):
        players = params.pop("players", 3 if name == "kuhn3p" else 2)
        tree = efg_games.kuhn_poker(int(players))
    elif name == "trade_comm":
        tree = efg_games.trade_comm(int(params.pop("items", 3)))
    elif name == "sheriff":
        known = {f.name for f in fields(efg_games.SheriffConfig)}
        cfg = efg_games.SheriffConfig(**{k: params.pop(k) for k in list(params) if k in known})
        tree = efg_games.sheriff(cfg)
    else:
        raise ConfigError(f"unknown extensive-form game {name!r}; known: {sorted(efg_games.BUILTIN_TREES)}")
    if params:
        raise ConfigError(f"unused game parameters for {name}: {sorted(params)}")
    return tree


def _fmt(values) -> str:
    # Adding 0.0 turns -0.0 into 0.0.
    return " ".join(f"{v + 0.0:.10g}" for v in np.ravel(values))


def cmd_solve_nf(args) -> int:
    game = make_normal_form(args.game, _parse_params(args.game_param))
    solver = args.solver.lower()
    if solver in GINI_SOLVERS:
        kind = GINI_SOLVERS[solver]
        cfg = mgce.SolverConfig(
            epsilon_mode=EPSILON_MODE_FLAGS[args.epsilon_mode], epsilon=args.epsilon,
            support_mode="full_support" if args.full_support else "general",
            max_iters=args.max_iterations or 5000, tol_kkt=args.tol_kkt)
        cs = build_constraints(game, kind)
        sol = mgce.solve(cs, cfg, engine=args.engine)
        sigma = sol.sigma
        print(f"solver\t{solver}")
        print(f"sigma\t{_fmt(sigma)}")
        print(f"gini\t{sol.gini:.10g}")
        print(f"epsilon\t{_fmt(sol.epsilon_used)}")
        print(f"kkt\t{_fmt(sol.kkt_residuals)}")
        print(f"iterations\t{sol.iterations}")
        for note in sol.notes:
            print(f"note\t{note}")
        if args.output:
            mgce.dump_solution(sol, args.output)
    else:
        info = meta_solvers.get(solver)
        seed = args.seed[0] if args.seed else 0
        sigma = info.solve(game, seed=seed)
        kind = info.kind or CCE
        viol, _ = constraint_violation(build_constraints(game, kind), sigma)
        print(f"solver\t{solver}")
        print(f"sigma\t{_fmt(sigma)}")
        print(f"gini\t{gini_impurity(sigma):.10g}")
        print(f"max_violation_{kind.lower()}\t{viol:.3g}")
        if args.output:
            doc = {"solver": solver, "seed": seed, "sigma": np.asarray(sigma).tolist(),
                   "gini": gini_impurity(sigma), "max_violation": viol, "kind": kind}
            Path(args.output).write_text(json.dumps(doc, indent=1) + "\n")
    print(f"values\t{_fmt(game.payoff_matrix() @ np.asarray(sigma))}")
    return EXIT_OK


def _trace_path(output, seed, many):
    if output in (None, "-"):
        return None
    if not many:
        return Path(output)
    path = Path(output)
    return path.with_name(f"{path.stem}.seed{seed}{path.suffix}")


def cmd_jpsro(args) -> int:
    base = jpsro.JpsroConfig(
        br_type=args.br.upper(), meta_solver=args.meta_solver, eval_solver=args.eval_solver,
        max_iterations=args.max_iterations or 100, pool_semantics=args.pool_semantics,
        ce_br_selection=args.ce_br_selection, players_per_iteration=args.players_per_iteration,
        gap_tolerance=args.gap_tolerance, record_wall_time=args.record_wall_time,
        time_budget=args.time_budget)
    seeds = args.seed or [0]
    status = EXIT_OK
    for seed in seeds:
        cfg = replace(base, seed=seed)
        tree = make_tree(args.game, _parse_params(args.game_param))
        path = _trace_path(args.output, seed, len(seeds) > 1)
        fh = open(path, "w") if path else sys.stdout
        try:
            def emit(rec, fh=fh):
                fh.write(json.dumps(rec.to_json()) + "\n")
                fh.flush()
            trace = jpsro.run_jpsro(tree, cfg, callback=emit)
        finally:
            if path:
                fh.close()
        final = trace.final
        summary = {
            "seed": seed, "game": args.game, "meta_solver": cfg.meta_solver, "br": cfg.br_type,
            "termination": trace.termination, "converged": trace.converged,
            "convergent_by_construction": trace.convergent_by_construction,
            "iterations": len(trace.records), "final_gap_ms": final.gap_ms,
            "final_gap_mw": final.gap_mw, "final_value_ms": final.value_ms,
            "final_value_mw": final.value_mw, "value_sum_ms": float(np.sum(final.value_ms)),
            "pool_size": list(trace.pool.sizes), "unique": trace.pool.unique_counts(),
        }
        print("summary " + json.dumps(summary), file=sys.stderr)
        if not trace.converged:
            status = EXIT_NOT_CONVERGED
    return status


def cmd_list_solvers(args) -> int:
    cols = ("joint", "cce", "ce", "max_val", "max_ent", "random")
    print("\t".join(("name",) + cols + ("description",)))
    for info in meta_solvers.listing():
        flags = info.flags()
        cells = [flags[c] if isinstance(flags[c], str) else ("yes" if flags[c] else "") for c in cols]
        desc = info.description + (" (external, not implemented)" if info.external else "")
        print("\t".join([info.name] + cells + [desc]))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_report

    if not Path(args.trace).is_file():
        raise ConfigError(f"trace file {args.trace} does not exist")
    for path in render_report(args.trace, args.output, title=args.title):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gini-ce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    nf = sub.add_parser("solve_nf", help="solve a normal-form game")
    nf.add_argument("--game", required=True, help="built-in name or path to a JSON game file")
    nf.add_argument("--game-param", action="append", metavar="KEY=VALUE")
    nf.add_argument("--solver", default="mgce",
                    help="mgce/mgcce for the Gini QP, or any key from list_solvers")
    nf.add_argument("--epsilon-mode", choices=sorted(EPSILON_MODE_FLAGS), default="fixed")
    nf.add_argument("--epsilon", type=float, default=0.0)
    nf.add_argument("--engine", choices=("dual", "qp"), default="dual")
    nf.add_argument("--full-support", action="store_true", help="use the full-support dual")
    nf.add_argument("--tol-kkt", type=float, default=1e-6)
    nf.add_argument("--max-iterations", type=int)
    nf.add_argument("--seed", type=int, nargs="+", action="extend")
    nf.add_argument("--output", help="solution dump path")
    nf.set_defaults(func=cmd_solve_nf)

    jp = sub.add_parser("jpsro", help="run joint policy-space response oracles")
    jp.add_argument("--game", required=True, choices=sorted(efg_games.BUILTIN_TREES))
    jp.add_argument("--game-param", action="append", metavar="KEY=VALUE")
    jp.add_argument("--meta-solver", default="mgcce")
    jp.add_argument("--eval-solver")
    jp.add_argument("--br", choices=("cce", "ce", "CCE", "CE"), default="cce")
    jp.add_argument("--max-iterations", type=int)
    jp.add_argument("--time-budget", type=float, help="seconds")
    jp.add_argument("--gap-tolerance", type=float, default=1e-6)
    jp.add_argument("--pool-semantics", choices=("multiset", "set"), default="multiset")
    jp.add_argument("--ce-br-selection", choices=("max_gap_only", "all_positive_support"),
                    default="max_gap_only")
    jp.add_argument("--players-per-iteration", choices=("all", "round_robin", "random"), default="all")
    jp.add_argument("--record-wall-time", action="store_true")
    jp.add_argument("--seed", type=int, nargs="+", action="extend")
    jp.add_argument("--output", help="JSONL trace path (stdout when omitted)")
    jp.set_defaults(func=cmd_jpsro)

    ls = sub.add_parser("list_solvers", help="list registered meta-solvers")
    ls.set_defaults(func=cmd_list_solvers)

    rp = sub.add_parser("report", help="render figures and a CSV summary from a JPSRO trace")
    rp.add_argument("trace")
    rp.add_argument("--output", required=True, help="output directory")
    rp.add_argument("--title")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GiniCeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
