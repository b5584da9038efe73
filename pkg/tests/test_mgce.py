import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gini_ce import mgce
from gini_ce.errors import ConfigError, GiniCeError, Infeasible
from gini_ce.mgce import SolverConfig
from gini_ce.normal_form import (CCE, CE, ConstraintSystem, NormalFormGame, build_constraints, chicken, gini_impurity,
                                 matching_pennies, traffic_lights)

TRAFFIC_LIGHTS_MGCE = np.array([0.033, 0.327, 0.327, 0.313])


@pytest.fixture
def tl_ce():
    return build_constraints(traffic_lights(), CE)


@pytest.mark.parametrize("engine", ["dual", "qp"])
def test_traffic_lights_mgce_matches_active_set_oracle(tl_ce, engine):
    sol = mgce.solve(tl_ce, SolverConfig(), engine=engine)
    exact = oracles.gini_qp_by_active_sets(tl_ce.dense(), np.zeros(4))
    np.testing.assert_allclose(sol.sigma, exact, atol=1e-8)
    np.testing.assert_allclose(sol.sigma, TRAFFIC_LIGHTS_MGCE, atol=1e-2)
    assert sol.kkt_residuals.max() <= 1e-6


def test_traffic_lights_min_epsilon(tl_ce):
    sol = mgce.solve(tl_ce, SolverConfig(epsilon_mode="min_epsilon"))
    np.testing.assert_allclose(sol.sigma, [0, 0.5, 0.5, 0], atol=1e-4)
    assert sol.epsilon_scalar == pytest.approx(-0.5, abs=1e-8)


def _full_support_scan(cs, grid):
    for eps in grid:
        sigma = oracles.gini_qp_by_active_sets(cs.dense(), np.full(cs.num_rows, eps))
        if sigma.min() > 1e-8:
            return eps
    return None


def test_full_support_epsilon_matches_grid_scan(tl_ce):
    sol = mgce.solve(tl_ce, SolverConfig(epsilon_mode="full_support_min", bisection_tol=1e-8))
    step = 1e-3
    scan = _full_support_scan(tl_ce, np.arange(-0.5, 0.0, step))
    assert sol.epsilon_scalar == pytest.approx(scan, abs=step)
    assert sol.sigma.min() > 0
    # Closed form for this game: eps = -21/62, where GG first gets mass.
    assert sol.epsilon_scalar == pytest.approx(-21 / 62, abs=1e-6)


def test_max_ab_gives_uniform_and_half_does_not(tl_ce):
    sol = mgce.solve(tl_ce, SolverConfig(epsilon_mode="max_ab"))
    np.testing.assert_allclose(sol.sigma, 0.25, atol=1e-12)
    half = mgce.solve(tl_ce, SolverConfig(epsilon_mode="half_max_ab"))
    assert np.abs(half.sigma - 0.25).max() > 1e-3
    assert mgce.max_ab_epsilon(build_constraints(traffic_lights(), CCE)) == pytest.approx(2.25)


@pytest.mark.parametrize("payoffs", oracles.game_suite(15, seed=21), ids=lambda p: str(p.shape))
def test_dual_and_primal_engines_agree(payoffs):
    g = NormalFormGame(payoffs)
    for kind in (CE, CCE):
        cs = build_constraints(g, kind)
        a = mgce.solve(cs, SolverConfig(), engine="dual")
        b = mgce.solve(cs, SolverConfig(), engine="qp")
        np.testing.assert_allclose(a.sigma, b.sigma, atol=1e-6)
        assert a.kkt_residuals.max() <= 1e-6


def test_two_by_two_games_against_active_set_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        payoffs = rng.normal(size=(2, 2, 2))
        for kind in (CE, CCE):
            cs = build_constraints(NormalFormGame(payoffs), kind)
            sol = mgce.solve(cs, SolverConfig())
            exact = oracles.gini_qp_by_active_sets(cs.dense(), np.zeros(cs.num_rows))
            np.testing.assert_allclose(sol.sigma, exact, atol=1e-7)


def test_kkt_certificate_detects_perturbation(tl_ce):
    sol = mgce.solve(tl_ce, SolverConfig())
    assert sol.kkt_residuals.max() <= 1e-8
    bumped = mgce.MgSolution(sigma=sol.sigma + np.array([1e-3, -1e-3, 0, 0]), dual=sol.dual,
                             epsilon_used=sol.epsilon_used, gini=0, kkt_residuals=sol.kkt_residuals,
                             iterations=0)
    assert mgce.kkt_certificate(tl_ce, bumped).max() > 1e-4
    wrong_dual = mgce.MgSolution(sigma=sol.sigma, dual=mgce.DualState(sol.dual.alpha * 1.5, sol.dual.beta),
                                 epsilon_used=sol.epsilon_used, gini=0, kkt_residuals=sol.kkt_residuals,
                                 iterations=0)
    assert mgce.kkt_certificate(tl_ce, wrong_dual).stationarity > 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=4, max_size=4),
       st.lists(st.floats(0, 10), min_size=4, max_size=4))
def test_recover_primal_sums_to_one(alpha, beta):
    cs = build_constraints(traffic_lights(), CE)
    sigma = mgce.recover_primal(mgce.DualState(np.array(alpha), np.array(beta)), cs)
    assert sigma.sum() == pytest.approx(1.0, abs=1e-9)


def test_recover_primal_reproduces_solution(tl_ce):
    sol = mgce.solve(tl_ce, SolverConfig())
    np.testing.assert_allclose(mgce.recover_primal(sol.dual, tl_ce), sol.sigma, atol=1e-9)


def test_learning_rate_identity_and_eigen_bound():
    # Orthonormal rows orthogonal to e: A C A^T = I, so the step is 1.
    A = np.array([[1, -1, 0, 0], [0, 0, 1, -1]]) / np.sqrt(2)
    cs = ConstraintSystem(sp.csr_matrix(A), np.zeros(2), CE, ((0,), (1,)), np.ones(2))
    assert mgce.optimal_learning_rate(cs) == pytest.approx(1.0)
    for payoffs in oracles.game_suite(10, seed=9):
        cs = build_constraints(NormalFormGame(payoffs), CE)
        A = cs.dense()
        n = A.shape[1]
        C = np.eye(n) - np.ones((n, n)) / n
        lam_max = np.linalg.eigvalsh(A @ C @ A.T).max()
        step = mgce.optimal_learning_rate(cs)
        assert 0 < step <= 2 / lam_max + 1e-12
        # Same value with a small assembly block.
        assert mgce.optimal_learning_rate(cs, block=3) == pytest.approx(step, rel=1e-12)


def test_learning_rate_rejects_empty_constraints():
    cs = build_constraints(NormalFormGame(np.zeros((2, 2, 2))), CE)
    with pytest.raises(ConfigError):
        mgce.optimal_learning_rate(cs)


def test_fixed_learning_rate_mode(tl_ce):
    cfg = SolverConfig(learning_rate_mode="fixed", learning_rate=1e-3)
    sol = mgce.solve(tl_ce, cfg)
    np.testing.assert_allclose(sol.sigma, oracles.gini_qp_by_active_sets(tl_ce.dense(), np.zeros(4)), atol=1e-7)
    with pytest.raises(ConfigError):
        SolverConfig(learning_rate_mode="fixed")


@pytest.mark.parametrize("v,inv_w", [
    (np.array([0.3, -1.0, 2.0, 0.1]), None),
    (np.array([5.0, 5.0, 5.0]), None),
    (np.array([0.2, 0.1, -0.3, 0.5]), np.array([1.0, 2.0, 0.5, 1.0])),
])
def test_weighted_simplex_projection_against_cvxpy(v, inv_w):
    import cvxpy as cp
    w = np.ones_like(v) if inv_w is None else 1 / inv_w
    s = cp.Variable(v.size)
    cp.Problem(cp.Minimize(0.5 * cp.sum(cp.multiply(w, cp.square(s))) - v @ s),
               [s >= 0, cp.sum(s) == 1]).solve(solver=cp.CLARABEL)
    sigma, _ = mgce.project_weighted_simplex(v, inv_w)
    np.testing.assert_allclose(sigma, s.value, atol=1e-7)


def test_scaled_simplex_projection():
    a = np.array([1.0, 2.0, 3.0])
    y = np.array([0.5, -0.2, 1.0])
    x = mgce.project_scaled_simplex(y, a, 2.0)
    assert a @ x == pytest.approx(2.0)
    assert x.min() >= 0


def test_gini_is_monotone_along_the_epsilon_family():
    for game in (traffic_lights(), chicken(), matching_pennies()):
        for kind in (CE, CCE):
            family = mgce.epsilon_family(build_constraints(game, kind), num=17)
            ginis = [p.gini for p in family]
            assert all(b >= a - 1e-9 for a, b in zip(ginis, ginis[1:]))
            assert ginis[-1] == pytest.approx(gini_impurity(np.full(4, 0.25)), abs=1e-9)


def test_epsilon_below_minimum_is_reported(tl_ce):
    with pytest.raises((Infeasible, GiniCeError)):
        mgce.solve(tl_ce, SolverConfig(epsilon=-0.6, max_iters=500))


def test_full_support_mode_falls_back(tl_ce):
    # Below eps = -21/62 the optimum leaves GG, so the full-support dual must fail over.
    sol = mgce.solve(tl_ce, SolverConfig(epsilon=-0.45, support_mode="full_support"))
    exact = oracles.gini_qp_by_active_sets(tl_ce.dense(), np.full(4, -0.45))
    np.testing.assert_allclose(sol.sigma, exact, atol=1e-8)
    assert exact[0] < 1e-12
    assert any("fell back" in n for n in sol.notes)
    wide = mgce.solve(tl_ce.with_epsilon(0.0), SolverConfig(epsilon_mode="half_max_ab", support_mode="full_support"))
    assert wide.sigma.min() > 0 and not wide.notes


def test_solution_dump_round_trip(tl_ce, tmp_path):
    sol = mgce.solve(tl_ce, SolverConfig())
    mgce.dump_solution(sol, tmp_path / "sol.json")
    doc = mgce.load_solution(tmp_path / "sol.json")
    np.testing.assert_array_equal(doc["sigma"], sol.sigma)
    assert doc["iterations"] == sol.iterations
    assert set(doc["kkt_residuals"]) == {"stationarity", "primal_feas", "dual_feas", "complementarity"}


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(epsilon_mode="bogus")
    with pytest.raises(ConfigError):
        SolverConfig(tol_kkt=0)
    with pytest.raises(ConfigError):
        mgce.solve(build_constraints(traffic_lights(), CE), engine="nope")


def test_affine_transform_leaves_solution_unchanged():
    rng = np.random.default_rng(2)
    for payoffs in oracles.game_suite(10, seed=12):
        g = NormalFormGame(payoffs)
        n = g.num_players
        h = g.affine_transform(rng.uniform(0.2, 5, n), rng.normal(size=n))
        for kind in (CE, CCE):
            a = mgce.solve(build_constraints(g, kind)).sigma
            b = mgce.solve(build_constraints(h, kind)).sigma
            np.testing.assert_allclose(a, b, atol=1e-6)
