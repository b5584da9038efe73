"""Linear-programming meta-solvers over the (C)CE polytope.

A small dense two-phase simplex engine backs maximum-welfare (MW), random
maximum-welfare (RMW) and random-vertex (RV) selection. Polytopes here are
meta-games of at most a few thousand joint actions, so the tableau stays
dense.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, Infeasible, IterationLimit, Unbounded
from .normal_form import ConstraintSystem, NormalFormGame, clean_distribution

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-11
RATIO_PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
WELFARE_TOL = 1e-9
# Relative size of the right-hand-side perturbation that breaks degeneracy.
PERTURBATION = 1e-7


@dataclass(frozen=True)
class LinearProgram:
    """Minimize ``cost . sigma`` over ``{A sigma <= eps, sigma >= 0, sum sigma = 1}``."""

    cost: np.ndarray
    cs: ConstraintSystem

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != (self.cs.num_joint,):
            raise ConfigError(f"cost has shape {cost.shape}, need ({self.cs.num_joint},)")
        object.__setattr__(self, "cost", cost)


@dataclass
class VertexSolution:
    sigma: np.ndarray
    basis: list
    objective_value: float


@dataclass
class SimplexResult:
    x: np.ndarray
    basis: np.ndarray
    objective: float
    pivots: int


class _Tableau:
    """Standard-form tableau ``min c.x  s.t.  M x = rhs, x >= 0`` with rhs >= 0.

    The tableau is rebuilt from the original matrix every ``REFACTOR_EVERY``
    pivots so round-off from long degenerate runs cannot accumulate.
    """

    REFACTOR_EVERY = 40

    def __init__(self, M, rhs, order, basis):
        self.M0 = M.copy()
        self.r0 = rhs.copy()
        self.M = M
        self.rhs = rhs
        self.order = order  # tie-break rank per column
        self.basis = basis
        self.pivots = 0
        self.clip = True  # off while repairing primal infeasibility

    def refactor(self):
        B = self.M0[:, self.basis]
        try:
            lu = scipy.linalg.lu_factor(B)
        except (ValueError, np.linalg.LinAlgError):
            return
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) < 1e-13:
            return
        self.M = scipy.linalg.lu_solve(lu, self.M0)
        self.rhs = scipy.linalg.lu_solve(lu, self.r0)
        if self.clip:
            np.maximum(self.rhs, 0.0, out=self.rhs)

    def solution(self):
        self.refactor()
        x = np.zeros(self.M.shape[1])
        x[self.basis] = self.rhs
        return x

    def pivot(self, row, col):
        piv = self.M[row, col]
        self.M[row] /= piv
        self.rhs[row] /= piv
        colv = self.M[:, col].copy()
        colv[row] = 0.0
        nz = np.nonzero(colv)[0]
        if nz.size:
            self.M[nz] -= np.outer(colv[nz], self.M[row])
            self.rhs[nz] -= colv[nz] * self.rhs[row]
        # Round-off can push degenerate rows slightly negative.
        if self.clip:
            np.maximum(self.rhs, 0.0, out=self.rhs)
        self.basis[row] = col
        self.pivots += 1
        if self.pivots % self.REFACTOR_EVERY == 0:
            self.refactor()

    def _lexicographic_row(self, ties, colv):
        """Lexicographic ratio test over the rows of B^-1 (the artificial block).

        Breaking ratio ties this way cannot cycle whatever the entering rule.
        """
        inv = self.M[:, self.M.shape[1] - self.M.shape[0]:]
        cand = ties
        for j in range(inv.shape[1]):
            vals = inv[cand, j] / colv[cand]
            cand = cand[vals <= vals.min() + 1e-12 * max(1.0, abs(vals.min()))]
            if cand.size == 1:
                break
        # Largest pivot element among what is left, for stability.
        return cand[np.argmax(colv[cand])]

    def repair(self, cost, allowed, max_pivots, tol):
        """Dual simplex: pivot negative basics out while keeping reduced costs >= 0."""
        self.clip = False
        try:
            self.refactor()
            while True:
                row = int(np.argmin(self.rhs))
                if self.rhs[row] >= -tol:
                    break
                if self.pivots > max_pivots:
                    raise IterationLimit(f"simplex exceeded {max_pivots} pivots")
                reduced = cost - cost[self.basis] @ self.M
                line = self.M[row]
                cand = np.nonzero(allowed & (line < -RATIO_PIVOT_TOL))[0]
                cand = cand[~np.isin(cand, self.basis)]
                if cand.size == 0:
                    raise Infeasible(f"linear program infeasible (basic value {self.rhs[row]:.3g})")
                ratios = np.maximum(reduced[cand], 0.0) / -line[cand]
                ties = cand[ratios <= ratios.min() + PIVOT_TOL]
                self.pivot(row, ties[np.argmin(self.order[ties])])
        finally:
            self.clip = True
        np.maximum(self.rhs, 0.0, out=self.rhs)

    def optimize(self, cost, allowed, max_pivots):
        """Primal simplex from the current basis. Dantzig pricing, Bland on degeneracy."""
        degenerate_run = 0
        bland = False
        while True:
            if self.pivots > max_pivots:
                raise IterationLimit(f"simplex exceeded {max_pivots} pivots")
            cb = cost[self.basis]
            reduced = cost - cb @ self.M
            reduced[~allowed] = 0.0
            reduced[self.basis] = 0.0
            candidates = np.nonzero(reduced < -PIVOT_TOL)[0]
            if candidates.size == 0:
                return
            # Once on, Bland's rule stays on: it is what guarantees termination.
            bland = bland or degenerate_run > 2 * len(self.basis)
            if bland:
                col = candidates[np.argmin(self.order[candidates])]
            else:
                best = reduced[candidates].min()
                ties = candidates[reduced[candidates] <= best + PIVOT_TOL]
                col = ties[np.argmin(self.order[ties])]
            colv = self.M[:, col]
            pos = np.nonzero(colv > RATIO_PIVOT_TOL * max(1.0, np.abs(colv).max()))[0]
            if pos.size == 0:
                raise Unbounded("objective unbounded below on the feasible set")
            ratios = self.rhs[pos] / colv[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
            row = ties[0] if ties.size == 1 else self._lexicographic_row(ties, colv)
            # Degenerate means the objective did not move, whatever the step length.
            gain = -reduced[col] * rmin
            degenerate_run = degenerate_run + 1 if gain <= 1e-12 * max(1.0, abs(cb @ self.rhs)) else 0
            self.pivot(row, col)


def simplex_core(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, seed=None, max_pivots=None):
    """Two-phase dense simplex for ``min c.x, A_ub x <= b_ub, A_eq x = b_eq, x >= 0``.

    The seed permutes the tie-break ranking of columns, so degenerate pivots
    (and the vertex returned among optimal ones) are reproducible per seed.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # Polytopes with A x <= 0 are cones cut by the simplex: the apex is
    # degenerate in every inequality and phase one can stall there for
    # thousands of pivots. A fixed tiny relaxation of b_ub breaks the ties;
    # it is removed again on the final basis.
    b_true = b_ub
    jitter = np.random.default_rng(0x5EED).uniform(0.5, 1.0, size=m_ub)
    b_ub = b_ub + PERTURBATION * jitter * np.maximum(1.0, np.abs(b_ub))

    # Columns: x (n) | slacks (m_ub) | artificials (m)
    n_total = n + m_ub + m
    M = np.zeros((m, n_total))
    rhs = np.concatenate([b_ub, b_eq])
    M[:m_ub, :n] = A_ub
    M[:m_ub, n:n + m_ub] = np.eye(m_ub)
    M[m_ub:, :n] = A_eq
    flip = rhs < 0
    M[flip] *= -1
    rhs = np.where(flip, -rhs, rhs)
    M[:, n + m_ub:] = np.eye(m)

    rng = np.random.default_rng(seed) if seed is not None else None
    order = np.arange(n_total, dtype=float)
    if rng is not None:
        order[:n + m_ub] = rng.permutation(n + m_ub)
    tab = _Tableau(M, rhs, order, np.arange(n + m_ub, n_total))
    max_pivots = max_pivots or 50 * (n_total + m) + 1000

    allowed = np.ones(n_total, dtype=bool)
    # Phase 1: drive artificials out.
    phase1 = np.zeros(n_total)
    phase1[n + m_ub:] = 1.0
    tab.optimize(phase1, allowed, max_pivots)
    infeas = float(tab.rhs[tab.basis >= n + m_ub].sum())
    if infeas > FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
        raise Infeasible(f"linear program infeasible (phase-one residual {infeas:.3g})")
    # Pivot remaining zero-level artificials out of the basis where possible.
    for row in np.nonzero(tab.basis >= n + m_ub)[0]:
        cand = np.nonzero(np.abs(tab.M[row, :n + m_ub]) > 1e-9)[0]
        if cand.size:
            tab.pivot(row, cand[np.argmin(order[cand])])
    allowed[n + m_ub:] = False

    full_cost = np.concatenate([c, np.zeros(m_ub + m)])
    tab.optimize(full_cost, allowed, max_pivots)
    # Drop the perturbation and restore primal feasibility on the same basis.
    true_rhs = np.concatenate([b_true, b_eq])
    tab.r0 = np.where(flip, -true_rhs, true_rhs)
    tab.repair(full_cost, allowed, max_pivots, FEAS_TOL * 1e-3)
    tab.optimize(full_cost, allowed, max_pivots)
    sol = tab.solution()
    x = np.maximum(sol[:n], 0.0)
    return SimplexResult(x=x, basis=tab.basis.copy(), objective=float(c @ x), pivots=tab.pivots)


def _active_rows(cs, sigma, tol=1e-8):
    r = cs.A @ sigma - cs.epsilon
    return [int(i) for i in np.nonzero(r >= -tol)[0]]


def simplex_solve(lp: LinearProgram, seed=None) -> VertexSolution:
    """Optimal basic feasible solution of ``lp`` over the (C)CE polytope."""
    cs = lp.cs
    n = cs.num_joint
    A = cs.dense()
    res = simplex_core(lp.cost, A_ub=A, b_ub=cs.epsilon,
                       A_eq=np.ones((1, n)), b_eq=np.ones(1), seed=seed)
    sigma = _finish(cs, res.x)
    return VertexSolution(sigma=sigma, basis=_active_rows(cs, sigma),
                          objective_value=float(lp.cost @ sigma))


def _finish(cs, x):
    sigma = clean_distribution(x, tol=1e-7)
    worst = float((cs.A @ sigma - cs.epsilon).max(initial=-np.inf))
    if worst > 1e-7:
        log.warning("simplex vertex violates constraints by %.3g", worst)
    return sigma


def _welfare_vector(cs: ConstraintSystem, game: NormalFormGame):
    w = game.welfare()
    if w.size != cs.num_joint:
        raise ConfigError("game and constraint system disagree on the joint action count")
    return w


def solve_mw(cs: ConstraintSystem, game: NormalFormGame, seed=None) -> np.ndarray:
    """Maximum-welfare (C)CE."""
    return simplex_solve(LinearProgram(-_welfare_vector(cs, game), cs), seed=seed).sigma


def random_unit_direction(n, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.full(n, 1.0 / np.sqrt(n))


def solve_rmw(cs: ConstraintSystem, game: NormalFormGame, seed=0) -> np.ndarray:
    """Random maximum-welfare (C)CE: a seeded random vertex of the MW face."""
    welfare = _welfare_vector(cs, game)
    n = cs.num_joint
    A = cs.dense()
    first = simplex_core(-welfare, A_ub=A, b_ub=cs.epsilon,
                         A_eq=np.ones((1, n)), b_eq=np.ones(1), seed=seed)
    best = float(welfare @ first.x)
    floor = best - WELFARE_TOL * max(1.0, abs(best))
    A2 = np.vstack([A, -welfare[None, :]])
    b2 = np.concatenate([cs.epsilon, [-floor]])
    cost = random_unit_direction(n, seed)
    second = simplex_core(cost, A_ub=A2, b_ub=b2, A_eq=np.ones((1, n)), b_eq=np.ones(1), seed=seed)
    return _finish(cs, second.x)


def solve_rv(cs: ConstraintSystem, seed=0) -> np.ndarray:
    """Random-vertex (C)CE: optimum of a Gaussian-normalized random linear cost."""
    cost = random_unit_direction(cs.num_joint, seed)
    return simplex_solve(LinearProgram(cost, cs), seed=seed).sigma


def min_epsilon_lp(cs: ConstraintSystem):
    """Smallest scalar ``eps`` with ``A sigma <= eps * epsilon_weights`` feasible.

    Returns ``(eps_min, sigma)``. Variables are ``sigma`` plus a split
    ``eps = eps_plus - eps_minus``.
    """
    n = cs.num_joint
    A = cs.dense()
    # All-zero rows (deviations to payoff-identical actions) constrain nothing.
    nonzero = np.abs(A).max(axis=1, initial=0.0) > 0
    if not nonzero.any():
        return 0.0, np.full(n, 1.0 / n)
    A = A[nonzero]
    ew = cs.epsilon_weights[nonzero][:, None]
    A_ub = np.hstack([A, -ew, ew])
    c = np.concatenate([np.zeros(n), [1.0, -1.0]])
    A_eq = np.concatenate([np.ones(n), [0.0, 0.0]])[None, :]
    res = simplex_core(c, A_ub=A_ub, b_ub=np.zeros(A.shape[0]), A_eq=A_eq, b_eq=np.ones(1))
    sigma = res.x[:n]
    eps = float(res.x[n] - res.x[n + 1])
    # Tighten: report the epsilon actually needed by the returned sigma.
    eps = float(np.max((A @ sigma) / ew[:, 0]))
    return eps, sigma / sigma.sum()
