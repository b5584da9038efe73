"""Maximum Gini (coarse) correlated equilibrium solvers.

The problem is

    max  1 - 1/2 sum_j w_j sigma_j^2
    s.t. A sigma <= eps,  sigma >= 0,  sum(sigma) = 1

with ``w`` all ones unless the constraint system comes from a game with
merged repeated actions. Two independent engines solve it:

* ``solve_dual_projected_gradient``: the default. It works on the dual in
  the constraint multipliers ``alpha`` only. The simplex multipliers are
  eliminated exactly, because for fixed ``alpha`` the inner minimization is
  a (weighted) Euclidean projection onto the probability simplex. Accelerated
  projected gradient with the Gerschgorin step size warms up ``alpha``;
  projected-Newton steps on the active face then finish the solve.
* ``solve_qp``: a primal interior-point solve through cvxpy, used as the
  cross-check oracle.

Sign convention: with ``alpha >= 0`` on ``A sigma <= eps``, ``beta >= 0`` on
``sigma >= 0`` and ``lam`` on ``sum(sigma) = 1``, stationarity reads
``W sigma = beta - A^T alpha - lam e``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from . import lp
from .errors import ConfigError, FullSupportViolated, Infeasible, IterationLimit
from .normal_form import ConstraintSystem, gini_impurity, normalize_rows

log = logging.getLogger(__name__)

EPSILON_MODES = ("fixed", "max_ab", "half_max_ab", "full_support_min", "min_epsilon")
SUPPORT_MODES = ("general", "full_support")
DENSE_LIMIT = 4_000_000
DIVERGENCE_LIMIT = 1e10


@dataclass(frozen=True)
class SolverConfig:
    epsilon_mode: str = "fixed"
    epsilon: float | np.ndarray = 0.0
    support_mode: str = "general"
    max_iters: int = 5000
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-8
    learning_rate_mode: str = "auto_gerschgorin"
    learning_rate: float | None = None
    bisection_tol: float = 1e-6
    warmup_iters: int = 200
    min_epsilon_weight: float = 2.0

    def __post_init__(self):
        if self.epsilon_mode not in EPSILON_MODES:
            raise ConfigError(f"epsilon_mode must be one of {EPSILON_MODES}, got {self.epsilon_mode!r}")
        if self.support_mode not in SUPPORT_MODES:
            raise ConfigError(f"support_mode must be one of {SUPPORT_MODES}")
        if self.learning_rate_mode not in ("auto_gerschgorin", "fixed"):
            raise ConfigError("learning_rate_mode must be auto_gerschgorin or fixed")
        if self.learning_rate_mode == "fixed" and not (self.learning_rate and self.learning_rate > 0):
            raise ConfigError("fixed learning_rate_mode needs a positive learning_rate")
        if self.max_iters <= 0:
            raise ConfigError("max_iters must be positive")
        for name in ("tol_kkt", "tol_feas", "bisection_tol", "min_epsilon_weight"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def inner_tol(self) -> float:
        # Target for the normalized residuals; well inside tol_kkt.
        return min(1e-10, self.tol_kkt * 1e-4)


@dataclass
class DualState:
    alpha: np.ndarray
    beta: np.ndarray | None = None


class KKTResiduals(NamedTuple):
    stationarity: float
    primal_feas: float
    dual_feas: float
    complementarity: float

    def max(self) -> float:
        return max(self)


@dataclass
class MgSolution:
    sigma: np.ndarray
    dual: DualState
    epsilon_used: np.ndarray
    gini: float
    kkt_residuals: KKTResiduals
    iterations: int
    engine: str = "dual"
    epsilon_scalar: float | None = None
    support_mode: str = "general"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "epsilon": self.epsilon_used.tolist(),
            "epsilon_scalar": self.epsilon_scalar,
            "gini": self.gini,
            "alpha": self.dual.alpha.tolist(),
            "beta": None if self.dual.beta is None else self.dual.beta.tolist(),
            "kkt_residuals": self.kkt_residuals._asdict(),
            "iterations": self.iterations,
            "engine": self.engine,
            "support_mode": self.support_mode,
            "notes": list(self.notes),
        }


def dump_solution(solution: MgSolution, path) -> None:
    Path(path).write_text(json.dumps(solution.to_dict(), indent=1) + "\n")


def load_solution(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["sigma"] = np.asarray(doc["sigma"])
    doc["epsilon"] = np.asarray(doc["epsilon"])
    return doc


# --- simplex geometry -------------------------------------------------------

def _inverse_weights(cs: ConstraintSystem) -> np.ndarray:
    if cs.weights is None:
        return np.ones(cs.num_joint)
    return 1.0 / np.asarray(cs.weights, dtype=float)


def unconstrained_optimum(cs: ConstraintSystem) -> np.ndarray:
    """Gini maximizer over the simplex alone: uniform, or ``1/w`` normalized."""
    u = _inverse_weights(cs)
    return u / u.sum()


def project_weighted_simplex(v, inv_w=None):
    """``argmin_s 1/2 s^T W s - v.s`` over the probability simplex.

    Returns ``(sigma, tau)`` with ``sigma = max(0, v - tau) * inv_w``.
    """
    v = np.asarray(v, dtype=float)
    if inv_w is None:
        inv_w = np.ones_like(v)
    order = np.argsort(-v, kind="stable")
    vs = v[order]
    ws = inv_w[order]
    s1 = np.cumsum(vs * ws)
    s2 = np.cumsum(ws)
    taus = (s1 - 1.0) / s2
    valid = np.nonzero(vs > taus)[0]
    k = valid[-1] if valid.size else 0
    tau = taus[k]
    return np.maximum(v - tau, 0.0) * inv_w, float(tau)


def project_scaled_simplex(y, a, c):
    """Euclidean projection of ``y`` onto ``{x >= 0, a.x = c}`` (``a > 0``)."""
    y = np.asarray(y, dtype=float)
    ratios = y / a
    order = np.argsort(-ratios, kind="stable")
    s1 = np.cumsum((a * y)[order])
    s2 = np.cumsum((a * a)[order])
    taus = (s1 - c) / s2
    valid = np.nonzero(ratios[order] > taus)[0]
    tau = taus[valid[-1]] if valid.size else taus[0]
    return np.maximum(y - tau * a, 0.0)


# --- the dual --------------------------------------------------------------

class _Dual:
    """Dual of the Gini QP on normalized rows, as a function of ``alpha`` alone."""

    def __init__(self, cs: ConstraintSystem, full_support=False):
        self.inv_w = _inverse_weights(cs)
        self.full_support = full_support
        A = cs.A
        if A.shape[0] * A.shape[1] <= DENSE_LIMIT:
            A = A.toarray()
        self.A = A
        self.eps = cs.epsilon
        self.R, self.N = cs.A.shape

    def primal(self, alpha):
        v = -(self.A.T @ alpha)
        if self.full_support:
            tau = (v @ self.inv_w - 1.0) / self.inv_w.sum()
            return (v - tau) * self.inv_w, float(tau)
        return project_weighted_simplex(v, self.inv_w)

    def evaluate(self, alpha):
        """Negated dual value, its gradient, the primal iterate and ``tau``."""
        sigma, tau = self.primal(alpha)
        r = self.A @ sigma - self.eps
        q = 0.5 * sigma @ (sigma / self.inv_w) + alpha @ r
        return -q, -r, sigma, tau

    def hessian(self, sigma):
        """``A_F P A_F^T`` with ``P`` the projection Jacobian on the support ``F``."""
        F = slice(None) if self.full_support else np.nonzero(sigma > 0)[0]
        AF = self.A[:, F]
        u = self.inv_w[F]
        if sp.issparse(AF):
            H = (AF @ sp.diags(u) @ AF.T).toarray()
            Au = np.asarray(AF @ u).ravel()
        else:
            H = (AF * u) @ AF.T
            Au = AF @ u
        return H - np.outer(Au, Au) / u.sum()

    def residuals(self, alpha, r):
        feas = max(float(r.max(initial=0.0)), 0.0)
        comp = float(np.max(np.abs(alpha * r), initial=0.0))
        return feas, comp


def optimal_learning_rate(cs: ConstraintSystem, block=512) -> float:
    """Step size ``2 / (max + min)`` of the Gerschgorin row sums of ``A C A^T``.

    ``C = I - e b^T`` centres the rows. ``D`` is assembled ``block`` rows at a
    time so large systems never need a dense ``R x R`` matrix at once.
    """
    A = cs.A
    R = A.shape[0]
    if R == 0 or (A.count_nonzero() if sp.issparse(A) else np.count_nonzero(A)) == 0:
        raise ConfigError("constraint matrix is all zeros: no constraints to optimize")
    A = sp.csr_matrix(A)
    inv_w = _inverse_weights(cs)
    Au = np.asarray(A @ inv_w).ravel()
    total = inv_w.sum()
    sums = np.empty(R)
    for start in range(0, R, block):
        rows = A[start:start + block]
        D = (rows @ sp.diags(inv_w) @ A.T).toarray() - np.outer(Au[start:start + block], Au) / total
        sums[start:start + block] = np.abs(D).sum(axis=1)
    lo, hi = sums.min(), sums.max()
    return 2.0 / (hi + lo)


def _accelerated_warmup(dual: _Dual, alpha, step, iters, tol):
    """Projected gradient with Nesterov momentum and gradient-mapping restarts.

    The step is halved whenever the dual objective blows up, a safeguard the
    constant-step theory does not need but ill-scaled systems sometimes do.
    """
    y = alpha.copy()
    t = 1.0
    f_best, _, _, _ = dual.evaluate(alpha)
    done = 0
    for k in range(iters):
        done = k + 1
        _, g, _, _ = dual.evaluate(y)
        new = np.maximum(0.0, y - step * g)
        if np.dot(new - y, new - alpha) < 0:
            t = 1.0
            y = alpha.copy()
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = new + ((t - 1.0) / t_next) * (new - alpha)
        alpha, t = new, t_next
        if k % 10 == 0:
            f, g, _, _ = dual.evaluate(alpha)
            if not np.isfinite(f) or f > abs(f_best) * 10 + 10:
                step *= 0.5
                log.debug("dual warm-up diverging; halving step to %.3g", step)
            f_best = min(f_best, f)
            feas, comp = dual.residuals(alpha, -g)
            if feas < tol and comp < tol:
                break
    return alpha, done


def _projected_newton(dual: _Dual, alpha, max_iters, tol):
    """Bertsekas-style projected Newton with Armijo search along the projection arc.

    Stops on the residual target (scaled by the multiplier size, since the
    residual floor of double precision grows with it) or once the objective
    stops moving for a few steps.
    """
    f, g, sigma, _ = dual.evaluate(alpha)
    stalled = 0
    for k in range(max_iters):
        feas, comp = dual.residuals(alpha, -g)
        target = tol * max(1.0, float(np.abs(alpha).max(initial=0.0)))
        if feas < target and comp < target:
            return alpha, k, True
        if stalled >= 3:
            return alpha, k, False
        if np.abs(alpha).max(initial=0.0) > DIVERGENCE_LIMIT:
            raise Infeasible("dual multipliers diverge: epsilon is below the minimum feasible value")
        H = dual.hessian(sigma)
        bound = (alpha <= 0) & (g > 0)
        free = ~bound
        d = np.where(bound, -g, 0.0)
        if free.any():
            Hff = H[np.ix_(free, free)]
            reg = 1e-10 * max(1.0, float(np.trace(Hff)) / free.sum())
            try:
                d[free] = -scipy.linalg.solve(Hff + reg * np.eye(free.sum()), g[free], assume_a="sym")
            except (np.linalg.LinAlgError, ValueError):
                d[free] = -np.linalg.lstsq(Hff, g[free], rcond=None)[0]
        t = 1.0
        accepted = False
        while t > 1e-14:
            trial = np.maximum(0.0, alpha + t * d)
            ft, gt, st, _ = dual.evaluate(trial)
            if ft <= f + 1e-4 * (g @ (trial - alpha)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Newton direction failed: fall back to a projected gradient step.
            step = 1.0 / max(1.0, np.abs(H).sum(axis=1).max(initial=1.0))
            trial = np.maximum(0.0, alpha - step * g)
            ft, gt, st, _ = dual.evaluate(trial)
            if ft > f:
                return alpha, k, False
        stalled = stalled + 1 if f - ft <= 1e-15 * max(1.0, abs(f)) else 0
        alpha, f, g, sigma = trial, ft, gt, st
    feas, comp = dual.residuals(alpha, -g)
    target = tol * max(1.0, float(np.abs(alpha).max(initial=0.0)))
    return alpha, max_iters, feas < target and comp < target


def _polish(dual: _Dual, alpha, sigma, max_moves=40):
    """Exact solve of the equality QP on the active set the dual identified.

    At the minimum epsilon the feasible set has no interior, the multipliers
    are unbounded and the dual iterates creep; the support and tight rows are
    usually right long before the iterate is, so a few KKT linear solves
    finish the job. Each move releases a row with a negative multiplier,
    drops a support entry that comes out negative (or the smallest one when
    the system is inconsistent), or adds the most violated row. Returns
    ``(sigma, alpha)`` or None.
    """
    if sp.issparse(dual.A) or dual.R == 0:
        return None
    A, eps = dual.A, dual.eps
    r = A @ sigma - eps
    act = np.nonzero((alpha > 0) | (r > -1e-7))[0]
    F = np.nonzero(sigma > 1e-9)[0]
    for _ in range(max_moves):
        if F.size == 0:
            return None
        wF = 1.0 / dual.inv_w[F]
        E = np.vstack([A[np.ix_(act, F)], np.ones((1, F.size))])
        m = E.shape[0]
        K = np.block([[np.diag(wF), E.T], [E, np.zeros((m, m))]])
        rhs = np.concatenate([np.zeros(F.size), eps[act], [1.0]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        x = sol[:F.size]
        if np.abs(K @ sol - rhs).max() > 1e-10:
            F = np.delete(F, int(np.argmin(sigma[F])))
            continue
        if x.min() < -1e-12:
            F = np.delete(F, int(np.argmin(x)))
            continue
        mu = sol[F.size:F.size + act.size]
        if act.size and mu.min() < -1e-9:
            act = np.delete(act, int(np.argmin(mu)))
            continue
        new = np.zeros_like(sigma)
        new[F] = x
        viol = A @ new - eps
        viol[act] = 0.0  # active rows already hold to the solve's residual
        if viol.max(initial=0.0) > 1e-12:
            act = np.union1d(act, [int(np.argmax(viol))])
            continue
        new = np.maximum(new, 0.0)
        return new, _fit_multipliers(A, eps, new, dual.inv_w)
    return None


def _fit_multipliers(A, eps, sigma, inv_w, tight_tol=1e-9):
    """Non-negative least-squares fit of the KKT multipliers for a fixed sigma.

    Unknowns: alpha >= 0 on the tight rows, beta >= 0 off the support and a
    free lambda (split in two); the target is stationarity
    ``w sigma + A^T alpha + lambda - beta = 0``.
    """
    tight = np.nonzero(A @ sigma - eps > -tight_tol)[0]
    off = np.nonzero(sigma == 0.0)[0]
    n = sigma.size
    cols = [A[tight].T, np.ones((n, 1)), -np.ones((n, 1)), -np.eye(n)[:, off]]
    coef, _ = scipy.optimize.nnls(np.hstack(cols), -sigma / inv_w)
    alpha = np.zeros(A.shape[0])
    alpha[tight] = coef[:tight.size]
    return alpha


def _beta_for(cs, sigma, alpha):
    """Simplex-bound multipliers consistent with stationarity on the support."""
    w = np.ones_like(sigma) if cs.weights is None else np.asarray(cs.weights)
    g = w * sigma + (cs.A.T @ alpha if cs.num_rows else 0.0)
    on = sigma > 0
    lam = -float(g[on].mean()) if on.any() else 0.0
    return np.where(on, 0.0, np.maximum(g + lam, 0.0))


def _resolve_epsilon(cs: ConstraintSystem, cfg: SolverConfig) -> ConstraintSystem:
    if cfg.epsilon_mode == "fixed":
        return cs.with_epsilon(cfg.epsilon)
    if cfg.epsilon_mode == "max_ab":
        return cs.with_epsilon(max_ab_epsilon(cs))
    if cfg.epsilon_mode == "half_max_ab":
        return cs.with_epsilon(0.5 * max_ab_epsilon(cs))
    raise ConfigError(f"epsilon_mode {cfg.epsilon_mode!r} is solved by its own routine")


def _scalar_epsilon(cs: ConstraintSystem):
    """The scalar behind ``cs.epsilon`` if it is a uniform multiple of the weights."""
    if cs.num_rows == 0:
        return 0.0
    ratio = cs.epsilon / cs.epsilon_weights
    if np.allclose(ratio, ratio[0], rtol=0, atol=1e-14):
        return float(ratio[0])
    return None


def solve_dual_projected_gradient(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig()) -> MgSolution:
    """Solve from the dual. ``cs.epsilon`` is used unless cfg selects an epsilon mode.

    Raises FullSupportViolated in full-support mode when the recovered sigma
    has mass below ``-tol_feas``; the best iterate is attached.
    """
    if cfg.epsilon_mode in ("fixed", "max_ab", "half_max_ab") and not (
            cfg.epsilon_mode == "fixed" and cfg.epsilon is None):
        cs = _resolve_epsilon(cs, cfg)
    full = cfg.support_mode == "full_support"
    norm_cs = normalize_rows(cs)
    kept = _kept_rows(cs)
    norms = _row_norms(cs)[kept]
    dual = _Dual(norm_cs, full_support=full)
    alpha = np.zeros(norm_cs.num_rows)
    iterations = 0
    converged = norm_cs.num_rows == 0
    if not converged:
        if cfg.learning_rate_mode == "fixed":
            step = cfg.learning_rate
        else:
            # Half the constant-step optimum: safe with momentum.
            step = 0.5 * optimal_learning_rate(norm_cs)
        alpha, iterations = _accelerated_warmup(
            dual, alpha, step, min(cfg.warmup_iters, cfg.max_iters), cfg.inner_tol)
        budget = max(cfg.max_iters - iterations, 1)
        alpha, extra, converged = _projected_newton(dual, alpha, budget, cfg.inner_tol)
        iterations += extra
    sigma_raw, tau = dual.primal(alpha)
    alpha_full = np.zeros(cs.num_rows)
    alpha_full[kept] = alpha / norms
    beta = None if full else np.maximum(0.0, norm_cs.A.T @ alpha + tau)
    solution = _package(cs, sigma_raw, alpha_full, beta, iterations, "dual", cfg)
    if not full and (solution.kkt_residuals.primal_feas > 0.01 * cfg.tol_feas or not converged):
        polished = _polish(dual, alpha, sigma_raw)
        if polished is not None:
            sig_p, alpha_p = polished

            def score(sol):
                # Feasibility to tol_feas first, then the largest KKT residual.
                k = sol.kkt_residuals
                return (k.primal_feas > 0.01 * cfg.tol_feas, k.max())

            for a in (alpha_p, alpha):
                a_full = np.zeros(cs.num_rows)
                a_full[kept] = a / norms
                alt = _package(cs, sig_p, a_full, _beta_for(cs, sig_p, a_full), iterations, "dual", cfg)
                if alt.kkt_residuals.max() <= cfg.tol_kkt and score(alt) < score(solution):
                    alt.notes = ["finished by an active-set solve"]
                    solution = alt
            converged = converged or solution.kkt_residuals.max() <= cfg.tol_kkt
    if full and sigma_raw.min(initial=0.0) < -cfg.tol_feas:
        raise FullSupportViolated(
            f"full-support dual gives sigma min {sigma_raw.min():.3g}", best=solution)
    if not converged and solution.kkt_residuals.max() > cfg.tol_kkt:
        raise IterationLimit(
            f"dual solver stopped after {iterations} iterations with KKT residual "
            f"{solution.kkt_residuals.max():.3g}", best=solution)
    return solution


def _row_norms(cs):
    return sp.linalg.norm(cs.A, axis=1) if cs.num_rows else np.zeros(0)


def _kept_rows(cs):
    return np.nonzero(_row_norms(cs) > 0)[0]


def _package(cs, sigma_raw, alpha, beta, iterations, engine, cfg) -> MgSolution:
    sigma = np.maximum(sigma_raw, 0.0)
    sigma /= sigma.sum()
    dual_state = DualState(alpha=alpha, beta=beta)
    sol = MgSolution(
        sigma=sigma, dual=dual_state, epsilon_used=cs.epsilon.copy(),
        gini=gini_impurity(sigma, cs.weights), kkt_residuals=KKTResiduals(0, 0, 0, 0),
        iterations=iterations, engine=engine, epsilon_scalar=_scalar_epsilon(cs),
        support_mode=cfg.support_mode)
    sol.kkt_residuals = kkt_certificate(cs, sol)
    return sol


def recover_primal(dual: DualState, cs: ConstraintSystem) -> np.ndarray:
    """Linear map from multipliers to sigma: ``b + P (beta - A^T alpha)``.

    ``P`` is the (weighted) centring projection, so the result sums to one for
    any multipliers. Nothing is clamped here.
    """
    inv_w = _inverse_weights(cs)
    v = -(cs.A.T @ dual.alpha)
    if dual.beta is not None:
        v = v + dual.beta
    lam = (v @ inv_w - 1.0) / inv_w.sum()
    return (v - lam) * inv_w


def kkt_certificate(cs: ConstraintSystem, solution: MgSolution) -> KKTResiduals:
    """KKT residuals of ``solution`` on the original (unnormalized) rows.

    The simplex multiplier ``lam`` is fitted to minimize the stationarity
    residual. A missing ``beta`` (full-support solve) is taken as zero.
    """
    sigma = np.asarray(solution.sigma, dtype=float)
    alpha = np.asarray(solution.dual.alpha, dtype=float)
    beta = np.zeros_like(sigma) if solution.dual.beta is None else np.asarray(solution.dual.beta)
    w = np.ones_like(sigma) if cs.weights is None else np.asarray(cs.weights)
    r = cs.A @ sigma - cs.epsilon if cs.num_rows else np.zeros(0)
    grad = w * sigma + (cs.A.T @ alpha if cs.num_rows else 0.0) - beta
    lam = -0.5 * (grad.max() + grad.min())
    stationarity = float(np.abs(grad + lam).max())
    primal = max(float(r.max(initial=0.0)), float(-sigma.min()), abs(float(sigma.sum()) - 1.0), 0.0)
    dual_feas = max(float(-alpha.min(initial=0.0)), float(-beta.min(initial=0.0)), 0.0)
    comp = max(float(np.abs(alpha * r).max(initial=0.0)), float(np.abs(beta * sigma).max(initial=0.0)))
    return KKTResiduals(stationarity, primal, dual_feas, comp)


def solve_qp(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig()) -> MgSolution:
    """Primal solve with cvxpy (Clarabel interior point) at tight tolerances."""
    import cvxpy as cp

    if cfg.epsilon_mode in ("fixed", "max_ab", "half_max_ab") and not (
            cfg.epsilon_mode == "fixed" and cfg.epsilon is None):
        cs = _resolve_epsilon(cs, cfg)
    norm_cs = normalize_rows(cs)
    kept = _kept_rows(cs)
    norms = _row_norms(cs)[kept]
    n = cs.num_joint
    w = np.ones(n) if cs.weights is None else np.asarray(cs.weights)
    s = cp.Variable(n)
    cons = [s >= 0, cp.sum(s) == 1]
    if norm_cs.num_rows:
        cons.insert(0, norm_cs.A @ s <= norm_cs.epsilon)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum(cp.multiply(w, cp.square(s)))), cons)
    try:
        prob.solve(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
                   max_iter=max(cfg.max_iters, 200))
    except cp.error.SolverError as exc:
        raise IterationLimit(f"QP solver failed: {exc}") from exc
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        raise Infeasible("constraint polytope is empty at this epsilon")
    if s.value is None:
        raise IterationLimit(f"QP solver returned status {prob.status}")
    alpha = np.zeros(cs.num_rows)
    if norm_cs.num_rows:
        alpha[kept] = np.maximum(np.asarray(cons[0].dual_value, dtype=float), 0.0) / norms
    beta = np.maximum(np.asarray(cons[-2].dual_value, dtype=float), 0.0)
    iters = int(prob.solver_stats.num_iters or 0)
    sol = _package(cs, np.asarray(s.value, dtype=float), alpha, beta, iters, "qp",
                   replace(cfg, support_mode="general"))
    if sol.kkt_residuals.max() > cfg.tol_kkt:
        log.warning("QP solution KKT residual %.3g above tolerance", sol.kkt_residuals.max())
    return sol


def max_ab_epsilon(cs: ConstraintSystem) -> float:
    """Smallest scalar epsilon at which the unconstrained optimum is feasible."""
    if cs.num_rows == 0:
        return 0.0
    b = unconstrained_optimum(cs)
    return float(np.max((cs.A @ b) / cs.epsilon_weights))


def _solve_at(cs, eps, cfg, engine="dual"):
    inner = replace(cfg, epsilon_mode="fixed", epsilon=eps)
    if engine == "qp":
        return solve_qp(cs, inner)
    return solve_dual_projected_gradient(cs, inner)


def _augmented_epsilon(cs: ConstraintSystem, weight: float, cfg: SolverConfig):
    """Epsilon from the augmented objective ``1/2 s^T W s + weight * eps``.

    Its dual lives on ``{alpha >= 0, epsilon_weights . alpha = weight}``;
    solved by accelerated projected gradient. Returns ``(eps, sigma)``.
    """
    norm_cs = normalize_rows(cs)
    ew = norm_cs.epsilon_weights
    dual = _Dual(norm_cs.with_epsilon(0.0))
    step = 0.5 * optimal_learning_rate(norm_cs)
    alpha = project_scaled_simplex(np.full(norm_cs.num_rows, weight / ew.sum()), ew, weight)
    y = alpha.copy()
    t = 1.0
    for _ in range(cfg.max_iters):
        _, g, _, _ = dual.evaluate(y)
        new = project_scaled_simplex(y - step * g, ew, weight)
        if np.dot(new - y, new - alpha) < 0:
            t, y = 1.0, alpha.copy()
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = new + ((t - 1.0) / t_next) * (new - alpha)
        if np.abs(new - alpha).max() < 1e-13:
            alpha = new
            break
        alpha, t = new, t_next
    sigma, _ = dual.primal(alpha)
    eps = float(np.max((norm_cs.A @ sigma) / ew))
    return eps, sigma


def solve_min_epsilon(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig(), engine="dual") -> MgSolution:
    """Max-Gini solution at the smallest feasible scalar epsilon.

    The augmented objective (a linear reward on lowering epsilon) picks the
    epsilon; an LP computes the exact minimum as a check, escalating the
    reward weight tenfold while they disagree. The final sigma comes from a
    certified fixed-epsilon solve at the minimum.
    """
    if cs.num_rows == 0 or _row_norms(cs).max(initial=0.0) == 0:
        return _solve_at(cs, 0.0, cfg, engine)
    eps_lp, _ = lp.min_epsilon_lp(cs)
    weight = cfg.min_epsilon_weight
    notes = []
    scale = max(1.0, float(np.abs(cs.A).max()))
    for _ in range(6):
        eps_aug, _ = _augmented_epsilon(cs, weight, cfg)
        if eps_aug <= eps_lp + 1e-6 * scale:
            break
        notes.append(f"augmented weight {weight:g} gave eps {eps_aug:.6g} > LP minimum {eps_lp:.6g}")
        log.info(notes[-1])
        weight *= 10.0
    # A hair of slack keeps round-off in the LP from making the polytope empty.
    eps = eps_lp + 1e-11 * scale
    sol = _solve_at(cs, eps, cfg, engine)
    sol.notes.extend(notes)
    sol.epsilon_scalar = eps
    return sol


def solve_full_support_epsilon(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig(), engine="dual") -> MgSolution:
    """Bisection for the smallest epsilon whose solution has full support."""
    lo, _ = lp.min_epsilon_lp(cs) if cs.num_rows else (0.0, None)
    hi = max_ab_epsilon(cs)
    lo = min(lo, hi)
    scale = max(1.0, float(np.abs(cs.A).max())) if cs.num_rows else 1.0
    lo_eps = lo + 1e-11 * scale
    sol_lo = _solve_at(cs, lo_eps, cfg, engine)
    if sol_lo.sigma.min() > cfg.tol_feas:
        return sol_lo
    best = _solve_at(cs, hi, cfg, engine)
    if best.sigma.min() <= cfg.tol_feas:
        # The unconstrained optimum has full support, so this only happens
        # when hi equals lo up to round-off.
        return best
    steps = 0
    while hi - lo > cfg.bisection_tol:
        steps += 1
        if steps > 200:
            raise IterationLimit("full-support bisection did not terminate", best=best)
        mid = 0.5 * (lo + hi)
        sol = _solve_at(cs, mid, cfg, engine)
        if sol.sigma.min() > cfg.tol_feas:
            hi, best = mid, sol
        else:
            lo = mid
    return best


def solve(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig(), engine="dual") -> MgSolution:
    """Dispatch on ``cfg.epsilon_mode`` and engine, with full-support fallback."""
    if engine not in ("dual", "qp"):
        raise ConfigError(f"unknown engine {engine!r}")
    if cfg.epsilon_mode == "min_epsilon":
        return solve_min_epsilon(cs, cfg, engine)
    if cfg.epsilon_mode == "full_support_min":
        return solve_full_support_epsilon(cs, cfg, engine)
    if engine == "qp":
        return solve_qp(cs, cfg)
    try:
        return solve_dual_projected_gradient(cs, cfg)
    except FullSupportViolated as exc:
        log.warning("%s; re-solving with general support", exc)
        sol = solve_dual_projected_gradient(cs, replace(cfg, support_mode="general"))
        sol.notes.append("full-support assumption failed; fell back to general support")
        return sol


@dataclass
class FamilyPoint:
    epsilon: float
    gini: float
    sigma: np.ndarray


def epsilon_family(cs: ConstraintSystem, cfg: SolverConfig = SolverConfig(), num=33) -> list[FamilyPoint]:
    """Solutions on a geometric grid of epsilons from the minimum up to max(Ab).

    Offsets above the minimum are geometrically spaced so the grid is dense
    near the tight end, where the solution moves fastest.
    """
    lo, _ = lp.min_epsilon_lp(cs) if cs.num_rows else (0.0, None)
    hi = max_ab_epsilon(cs)
    scale = max(1.0, float(np.abs(cs.A).max())) if cs.num_rows else 1.0
    lo = min(lo + 1e-11 * scale, hi)
    span = hi - lo
    if span <= 0:
        offsets = np.zeros(num)
    else:
        offsets = np.concatenate([[0.0], np.geomspace(span * 1e-3, span, num - 1)])
    out = []
    for off in offsets:
        eps = lo + off
        sol = _solve_at(cs, eps, cfg)
        out.append(FamilyPoint(epsilon=float(eps), gini=sol.gini, sigma=sol.sigma))
    return out


def timed_solve(cs, cfg=SolverConfig(), engine="dual"):
    start = time.perf_counter()
    sol = solve(cs, cfg, engine)
    return sol, time.perf_counter() - start
