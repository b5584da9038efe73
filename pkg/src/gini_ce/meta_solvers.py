"""Registry of meta-solvers: maps from a normal-form (meta-)game to a joint distribution.

Equilibrium solvers first merge repeated actions, solve the smaller game with
the repeat-weighted objective, then expand the answer back to the full joint
space. External solvers can be added with ``register``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import baselines, lp, mgce
from .errors import ConfigError
from .normal_form import (CCE, CE, NormalFormGame, build_constraints,
                          eliminate_dominated_actions, eliminate_repeated_actions)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaSolverInfo:
    name: str
    description: str
    joint: bool
    cce: str  # "yes", "eps" (approximate) or ""
    ce: str
    max_val: bool
    max_ent: bool
    random: bool
    kind: str | None  # equilibrium kind produced, None for baselines
    solve: Callable | None = None
    external: bool = False

    def flags(self) -> dict:
        return {"joint": self.joint, "cce": self.cce, "ce": self.ce,
                "max_val": self.max_val, "max_ent": self.max_ent, "random": self.random}


@dataclass(frozen=True)
class MetaSolverOptions:
    solver_config: mgce.SolverConfig = mgce.SolverConfig()
    engine: str = "dual"
    merge_repeats: bool = True
    eliminate_dominated: bool = False


def _reduce(game, kind, options, eps_nonpositive):
    reduction = None
    reduced = game
    if options.merge_repeats:
        reduced, reduction = eliminate_repeated_actions(reduced)
    if options.eliminate_dominated:
        if not eps_nonpositive:
            raise ConfigError("dominated-action elimination is only sound for epsilon <= 0")
        reduced, reduction = eliminate_dominated_actions(reduced, reduction)
    if reduction is not None and reduction.is_identity:
        reduction = None
    cs = build_constraints(reduced, kind, reduction)
    return reduced, reduction, cs


def _expand(reduction, x):
    return x if reduction is None else reduction.expand(x)


def _mg(kind, epsilon_mode, fraction=None):
    def run(game, seed=None, options=MetaSolverOptions()):
        cfg = replace(options.solver_config, epsilon_mode=epsilon_mode)
        if fraction is not None:
            cfg = replace(cfg, epsilon_mode="fixed")
        eps_nonpositive = epsilon_mode in ("min_epsilon",) or (
            epsilon_mode == "fixed" and fraction is None and np.all(np.asarray(cfg.epsilon) <= 0))
        _, reduction, cs = _reduce(game, kind, options, eps_nonpositive)
        if fraction is not None:
            cfg = replace(cfg, epsilon=fraction * mgce.max_ab_epsilon(cs))
        sol = mgce.solve(cs, cfg, engine=options.engine)
        return _expand(reduction, sol.sigma)
    return run


def _lp_solver(kind, which):
    def run(game, seed=None, options=MetaSolverOptions()):
        reduced, reduction, cs = _reduce(game, kind, options, True)
        if which == "mw":
            x = lp.solve_mw(cs, reduced, seed=seed)
        elif which == "rmw":
            x = lp.solve_rmw(cs, reduced, seed=0 if seed is None else seed)
        else:
            x = lp.solve_rv(cs, seed=0 if seed is None else seed)
        return _expand(reduction, x)
    return run


def _baseline(fn):
    def run(game, seed=None, options=MetaSolverOptions()):
        if fn is baselines.uniform_joint:
            return fn(game.num_joint)
        return fn(game.num_joint, seed)
    return run


_REGISTRY: dict[str, MetaSolverInfo] = {}


def register(info: MetaSolverInfo) -> None:
    _REGISTRY[info.name] = info


def _builtin():
    B = MetaSolverInfo
    entries = [
        B("uniform", "uniform over joint policies", False, "", "", False, True, False, None,
          _baseline(baselines.uniform_joint)),
        B("prd", "projected replicator dynamics", False, "", "", False, False, False, None, external=True),
        B("alpha_rank", "alpha-rank", True, "", "", False, False, False, None, external=True),
        B("random_dirichlet", "flat Dirichlet draw over joint policies", True, "", "", False, False, True, None,
          _baseline(baselines.random_dirichlet)),
        B("random_joint", "point mass on a random joint policy", True, "", "", False, False, True, None,
          _baseline(baselines.random_joint)),
    ]
    for kind, suffix in ((CCE, "cce"), (CE, "ce")):
        ce_flag = "yes" if kind == CE else ""
        ce_eps = "eps" if kind == CE else ""
        entries += [
            B(f"mw{suffix}", f"maximum-welfare {kind}", True, "yes", ce_flag, True, False, False, kind,
              _lp_solver(kind, "mw")),
            B(f"rmw{suffix}", f"random maximum-welfare {kind}", True, "yes", ce_flag, True, False, True, kind,
              _lp_solver(kind, "rmw")),
            B(f"rv{suffix}", f"random-vertex {kind}", True, "yes", ce_flag, False, False, True, kind,
              _lp_solver(kind, "rv")),
            B(f"eps100_mg{suffix}", f"maximum Gini {kind} at eps = max(Ab)/100", True, "eps", ce_eps,
              False, True, False, kind, _mg(kind, "fixed", fraction=0.01)),
            B(f"mg{suffix}", f"maximum Gini {kind}", True, "yes", ce_flag, False, True, False, kind,
              _mg(kind, "fixed")),
            B(f"min_eps_mg{suffix}", f"maximum Gini {kind} at the minimum epsilon", True, "yes", ce_flag,
              False, True, False, kind, _mg(kind, "min_epsilon")),
        ]
    for e in entries:
        register(e)


_builtin()


def get(name: str) -> MetaSolverInfo:
    try:
        info = _REGISTRY[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown meta-solver {name!r}; known: {sorted(_REGISTRY)}") from None
    if info.external or info.solve is None:
        raise ConfigError(f"meta-solver {name!r} is external, not implemented")
    return info


def listing() -> list[MetaSolverInfo]:
    return list(_REGISTRY.values())


def solve(name: str, game: NormalFormGame, seed=None, options: MetaSolverOptions = MetaSolverOptions()) -> np.ndarray:
    return get(name).solve(game, seed=seed, options=options)
