"""Joint policy-space response oracles.

Each iteration builds the meta-game of the current pool, asks the
meta-solver for a joint distribution over it, computes exact best responses
against that distribution and adds them to the pool. Gaps and values are also
measured under a second, evaluation distribution (random maximum-welfare by
default).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import meta_solvers
from .efg.core import GameTree
from .efg.oracle import MetaGameEstimator, best_response_ce, best_response_cce
from .efg.policy import JointPolicyPool
from .errors import ConfigError
from .normal_form import CCE, CE, NormalFormGame

log = logging.getLogger(__name__)

SUPPORT_TOL = 1e-8

TRACE_FIELDS = ("iteration", "solver", "gap_ms", "gap_mw", "value_ms", "value_mw",
                "unique", "pool_size", "wall_ms")


@dataclass(frozen=True)
class JpsroConfig:
    br_type: str = CCE
    meta_solver: str = "mgcce"
    meta_solver_options: meta_solvers.MetaSolverOptions = meta_solvers.MetaSolverOptions()
    eval_solver: str | None = None
    max_iterations: int = 100
    pool_semantics: str = "multiset"
    ce_br_selection: str = "max_gap_only"
    players_per_iteration: str = "all"
    seed: int = 0
    gap_tolerance: float = 1e-6
    record_wall_time: bool = False
    time_budget: float | None = None  # seconds; checked between iterations

    def __post_init__(self):
        br = self.br_type.upper()
        object.__setattr__(self, "br_type", br)
        if br not in (CCE, CE):
            raise ConfigError("br_type must be CCE or CE")
        info = meta_solvers.get(self.meta_solver)
        if br == CE and info.kind == CCE:
            raise ConfigError(f"CE best responses need a CE meta-solver; {self.meta_solver} produces CCEs")
        meta_solvers.get(self.resolved_eval_solver)
        if self.pool_semantics not in ("multiset", "set"):
            raise ConfigError("pool_semantics must be multiset or set")
        if self.ce_br_selection not in ("all_positive_support", "max_gap_only"):
            raise ConfigError("ce_br_selection must be all_positive_support or max_gap_only")
        if self.players_per_iteration not in ("all", "round_robin", "random"):
            raise ConfigError("players_per_iteration must be all, round_robin or random")
        if self.max_iterations < 1 or not self.gap_tolerance > 0:
            raise ConfigError("max_iterations and gap_tolerance must be positive")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError("time_budget must be positive")

    @property
    def resolved_eval_solver(self) -> str:
        return self.eval_solver or f"rmw{self.br_type.lower()}"

    @property
    def exact_meta_solver(self) -> bool:
        return meta_solvers.get(self.meta_solver).kind is not None


@dataclass
class GapReport:
    total: float
    per_player: np.ndarray
    responses: list  # per player: list of BrResult (one for CCE, one per recommendation for CE)
    raw_per_player: np.ndarray  # unclamped
    weights: list | None = None  # per player: probability of each response's recommendation


@dataclass
class IterationRecord:
    iteration: int
    solver: str
    pool_sizes: tuple
    sigma: np.ndarray
    gap_ms: float
    gaps_ms: list
    gap_mw: float
    gaps_mw: list
    value_ms: list
    value_mw: list
    ne_gap: float | None
    unique: list
    wall_ms: float
    novel_br: list
    added: list

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "solver": self.solver,
            "gap_ms": self.gap_ms,
            "gap_mw": self.gap_mw,
            "value_ms": list(self.value_ms),
            "value_mw": list(self.value_mw),
            "unique": list(self.unique),
            "pool_size": list(self.pool_sizes),
            "wall_ms": self.wall_ms,
        }


@dataclass
class JpsroTrace:
    records: list
    pool: JointPolicyPool
    termination: str
    config: JpsroConfig
    convergent_by_construction: bool = True
    meta_game: NormalFormGame | None = None
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


def value(meta_game: NormalFormGame, sigma) -> np.ndarray:
    """Expected payoff of every player under the joint distribution."""
    return meta_game.payoff_matrix() @ np.asarray(sigma, dtype=float).ravel()


def _factorizes(sigma, shape, tol=1e-9):
    marg = marginals_of(sigma, shape)
    prod = marg[0]
    for m in marg[1:]:
        prod = np.multiply.outer(prod, m)
    return np.abs(prod.ravel() - np.asarray(sigma).ravel()).max() <= tol, marg


def marginals_of(sigma, shape):
    full = np.asarray(sigma, dtype=float).reshape(shape)
    n = len(shape)
    return [full.sum(axis=tuple(q for q in range(n) if q != p)) for p in range(n)]


def cce_gap(tree: GameTree, pool: JointPolicyPool, sigma, meta_game: NormalFormGame) -> GapReport:
    n = tree.num_players
    responses = [[best_response_cce(tree, pool, sigma, p, meta_game)] for p in range(n)]
    raw = np.array([r[0].gap for r in responses])
    per = np.maximum(raw, 0.0)
    return GapReport(float(per.sum()), per, responses, raw)


def ce_gap(tree: GameTree, pool: JointPolicyPool, sigma, meta_game: NormalFormGame) -> GapReport:
    """Sum over players of ``sum_i sigma_p(i) * max(0, gap of BR conditioned on i)``."""
    n = tree.num_players
    marg = marginals_of(sigma, pool.sizes)
    responses, weights, per, raw = [], [], np.zeros(n), np.zeros(n)
    for p in range(n):
        rs, ws = [], []
        for i in np.nonzero(marg[p] > 0)[0]:
            r = best_response_ce(tree, pool, sigma, p, int(i), meta_game)
            rs.append(r)
            ws.append(float(marg[p][i]))
            per[p] += marg[p][i] * max(r.gap, 0.0)
            raw[p] += marg[p][i] * r.gap
        responses.append(rs)
        weights.append(ws)
    return GapReport(float(per.sum()), per, responses, raw, weights)


def ne_gap(tree: GameTree, pool: JointPolicyPool, sigma_marginals, meta_game: NormalFormGame) -> float:
    """NashConv of the product of per-player marginals over the pool."""
    prod = np.asarray(sigma_marginals[0], dtype=float)
    for m in sigma_marginals[1:]:
        prod = np.multiply.outer(prod, np.asarray(m, dtype=float))
    return float(sum(best_response_cce(tree, pool, prod, p, meta_game).gap
                     for p in range(tree.num_players)))


def unique_policies(pool: JointPolicyPool) -> list:
    return pool.unique_counts()


def _gap(kind, tree, pool, sigma, meta_game):
    return (ce_gap if kind == CE else cce_gap)(tree, pool, sigma, meta_game)


def _players_to_update(cfg: JpsroConfig, t: int, n: int, rng) -> list:
    if cfg.players_per_iteration == "all":
        return list(range(n))
    if cfg.players_per_iteration == "round_robin":
        return [t % n]
    return [int(rng.integers(n))]


def _selected_responses(cfg: JpsroConfig, report: GapReport, player: int) -> list:
    responses = report.responses[player]
    if cfg.br_type == CCE:
        return responses
    # Recommendations carrying only solver round-off are not treated as support.
    pairs = [(w, r) for w, r in zip(report.weights[player], responses) if w > SUPPORT_TOL]
    if not pairs:
        return []
    if cfg.ce_br_selection == "all_positive_support":
        return [r for _, r in pairs]
    return [max(pairs, key=lambda wr: wr[0] * wr[1].gap)[1]]


def run_jpsro(tree: GameTree, cfg: JpsroConfig = JpsroConfig(), callback=None) -> JpsroTrace:
    """Run the loop until the total gap under the meta-solver is within tolerance."""
    pool = JointPolicyPool.initial(tree, cfg.pool_semantics)
    estimator = MetaGameEstimator(tree)
    ms = meta_solvers.get(cfg.meta_solver)
    ev = meta_solvers.get(cfg.resolved_eval_solver)
    rng = np.random.default_rng(cfg.seed)
    trace = JpsroTrace(records=[], pool=pool, termination="max_iterations", config=cfg,
                       convergent_by_construction=cfg.exact_meta_solver)
    if not cfg.exact_meta_solver:
        log.info("meta-solver %s is not an equilibrium solver: no convergence guarantee", cfg.meta_solver)
    n = tree.num_players
    started = time.perf_counter()
    for t in range(cfg.max_iterations):
        start = time.perf_counter()
        meta_game = estimator.estimate(pool)
        try:
            sigma = ms.solve(meta_game, seed=cfg.seed + t, options=cfg.meta_solver_options)
            report = _gap(cfg.br_type, tree, pool, sigma, meta_game)
            sigma_ev = ev.solve(meta_game, seed=cfg.seed + t, options=cfg.meta_solver_options)
            report_ev = _gap(cfg.br_type, tree, pool, sigma_ev, meta_game)
        except Exception as exc:
            trace.termination = "error"
            trace.error = f"{type(exc).__name__}: {exc}"
            log.error("iteration %d failed: %s", t, trace.error)
            raise
        factor, marg = _factorizes(sigma, pool.sizes)
        ne = ne_gap(tree, pool, marg, meta_game) if factor else None
        selected = [_selected_responses(cfg, report, p) for p in range(n)]
        novel = [any(not pool.contains_behaviour(p, r.policy) for r in selected[p]) for p in range(n)]
        rec = IterationRecord(
            iteration=t, solver=cfg.meta_solver, pool_sizes=pool.sizes, sigma=np.asarray(sigma),
            gap_ms=report.total, gaps_ms=report.per_player.tolist(),
            gap_mw=report_ev.total, gaps_mw=report_ev.per_player.tolist(),
            value_ms=value(meta_game, sigma).tolist(), value_mw=value(meta_game, sigma_ev).tolist(),
            ne_gap=ne, unique=unique_policies(pool), wall_ms=0.0, novel_br=novel, added=[0] * n)
        trace.meta_game = meta_game
        if report.total <= cfg.gap_tolerance:
            trace.termination = "converged"
        else:
            for p in _players_to_update(cfg, t, n, rng):
                for r in selected[p]:
                    if pool.add(p, r.policy, t + 1):
                        rec.added[p] += 1
        if cfg.record_wall_time:
            rec.wall_ms = 1000.0 * (time.perf_counter() - start)
        trace.records.append(rec)
        log.info("iter %d pool %s gap_ms %.3e gap_mw %.3e value_ms %s", t, pool.sizes,
                 rec.gap_ms, rec.gap_mw, np.round(rec.value_ms, 6))
        if callback is not None:
            callback(rec)
        if trace.converged:
            break
        if cfg.pool_semantics == "set" and not any(rec.added):
            trace.termination = "stalled"
            break
        if cfg.time_budget is not None and time.perf_counter() - started > cfg.time_budget:
            trace.termination = "time_budget"
            break
    return trace


def write_trace(trace: JpsroTrace, path) -> None:
    with open(path, "w") as fh:
        for rec in trace.records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def read_trace(path) -> list[dict]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            doc = json.loads(line)
            missing = [f for f in TRACE_FIELDS if f not in doc]
            if missing:
                raise ConfigError(f"trace line lacks fields {missing}")
            out.append(doc)
    return out
