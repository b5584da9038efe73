"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def random_game(rng, num_players, num_actions, low=-1.0, high=1.0):
    shape = (num_players,) + tuple(num_actions)
    return rng.uniform(low, high, size=shape)


def game_suite(count=100, seed=20240601):
    """Seeded games with 2-3 players and 2-4 actions each (at most 3 x 4)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(2, 4))
        actions = tuple(int(a) for a in rng.integers(2, 5, size=n))
        out.append(random_game(rng, n, actions))
    return out


# --- constraint rows, one joint at a time ----------------------------------

def joints(shape):
    return list(itertools.product(*[range(k) for k in shape]))


def ce_rows(payoffs):
    """``{(p, a, a'): row}`` built by looping over every joint action."""
    shape = payoffs.shape[1:]
    index = {j: i for i, j in enumerate(joints(shape))}
    rows = {}
    for p in range(len(shape)):
        for a in range(shape[p]):
            for dev in range(shape[p]):
                if dev == a:
                    continue
                row = np.zeros(len(index))
                for j, i in index.items():
                    if j[p] != a:
                        continue
                    moved = j[:p] + (dev,) + j[p + 1:]
                    row[i] = payoffs[(p,) + moved] - payoffs[(p,) + j]
                rows[(p, a, dev)] = row
    return rows


def cce_rows(payoffs):
    shape = payoffs.shape[1:]
    index = {j: i for i, j in enumerate(joints(shape))}
    rows = {}
    for p in range(len(shape)):
        for dev in range(shape[p]):
            row = np.zeros(len(index))
            for j, i in index.items():
                moved = j[:p] + (dev,) + j[p + 1:]
                row[i] = payoffs[(p,) + moved] - payoffs[(p,) + j]
            rows[(p, dev)] = row
    return rows


# --- polytope vertices and the Gini QP by active-set enumeration -----------

def polytope_vertices(A, b, tol=1e-9):
    """Vertices of ``{x >= 0, sum x = 1, A x <= b}`` by enumerating tight sets."""
    n = A.shape[1]
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    found = []
    for tight in itertools.combinations(range(G.shape[0]), n - 1):
        M = np.vstack([G[list(tight)], np.ones(n)])
        rhs = np.concatenate([h[list(tight)], [1.0]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs)
        if np.all(G @ x <= h + tol) and not any(np.abs(x - v).max() < 1e-8 for v in found):
            found.append(x)
    return found


def gini_qp_by_active_sets(A, b, tol=1e-10):
    """Exact minimizer of ``1/2 |x|^2`` on ``{x >= 0, sum x = 1, A x <= b}``.

    Tries every set of tight inequalities, solves the equality-constrained
    KKT system and keeps the candidate that is primal feasible with
    non-negative multipliers. Only for tiny problems.
    """
    n = A.shape[1]
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    m = G.shape[0]
    for size in range(0, n):
        for tight in itertools.combinations(range(m), size):
            E = np.vstack([G[list(tight)], np.ones(n)]) if size else np.ones((1, n))
            f = np.concatenate([h[list(tight)], [1.0]]) if size else np.ones(1)
            K = np.block([[np.eye(n), E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
            rhs = np.concatenate([np.zeros(n), f])
            try:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            x, mult = sol[:n], sol[n:]
            if np.abs(K @ sol - rhs).max() > 1e-9:
                continue
            if np.all(G @ x <= h + tol) and np.all(mult[:size] >= -tol):
                return x
    raise RuntimeError("no KKT point found")


def lp_min_epsilon(A):
    """``min eps`` s.t. ``A x <= eps``, x on the simplex, via scipy."""
    n = A.shape[1]
    c = np.concatenate([np.zeros(n), [1.0]])
    res = linprog(c, A_ub=np.hstack([A, -np.ones((A.shape[0], 1))]), b_ub=np.zeros(A.shape[0]),
                  A_eq=np.concatenate([np.ones(n), [0.0]])[None], b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    return float(res.x[-1])


# --- Kuhn poker by direct enumeration of pure strategies --------------------

def kuhn2p_value():
    """Value to player 0 of two-player Kuhn poker from the 64 x 64 pure-strategy game.

    Player 0 decides at (card, "") and (card, "pb"); player 1 at (card, "p")
    and (card, "b"). Action 0 passes/folds, 1 bets/calls.
    """
    cards = range(3)

    def payoff(s0, s1, c0, c1):
        first = s0[(c0, "")]
        hi = 1.0 if c0 > c1 else -1.0
        if first == 1:
            return 2 * hi if s1[(c1, "b")] == 1 else 1.0
        if s1[(c1, "p")] == 0:
            return hi
        return 2 * hi if s0[(c0, "pb")] == 1 else -1.0

    keys0 = [(c, h) for c in cards for h in ("", "pb")]
    keys1 = [(c, h) for c in cards for h in ("p", "b")]
    strat0 = [dict(zip(keys0, bits)) for bits in itertools.product((0, 1), repeat=6)]
    strat1 = [dict(zip(keys1, bits)) for bits in itertools.product((0, 1), repeat=6)]
    deals = [(a, b) for a in cards for b in cards if a != b]
    M = np.array([[np.mean([payoff(s0, s1, a, b) for a, b in deals]) for s1 in strat1] for s0 in strat0])
    # max v s.t. M^T x >= v, x on the simplex
    k = M.shape[0]
    c = np.concatenate([np.zeros(k), [-1.0]])
    res = linprog(c, A_ub=np.hstack([-M.T, np.ones((M.shape[1], 1))]), b_ub=np.zeros(M.shape[1]),
                  A_eq=np.concatenate([np.ones(k), [0.0]])[None], b_eq=[1.0],
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    return float(res.x[-1])


# --- tree walks over State objects ------------------------------------------

def walk_value(state, policies, reach=1.0):
    """Expected returns of every player by recursive tree walk.

    ``policies[p](key)`` gives player p's action probabilities.
    """
    player = state.current_player()
    if player == -2:
        return reach * np.asarray(state.returns(), dtype=float)
    if player == -1:
        return sum(walk_value(state.child(a), policies, reach * pr) for a, pr in state.chance_outcomes())
    probs = policies[player](state.info_state_key())
    total = 0.0
    for a, pr in zip(state.legal_actions(), probs):
        if pr > 0:
            total = total + walk_value(state.child(a), policies, reach * pr)
    return total


def infosets_of(state, player, out=None):
    """Ordered ``{key: num_actions}`` for one player's information states."""
    out = {} if out is None else out
    cp = state.current_player()
    if cp == -2:
        return out
    if cp == -1:
        for a, _ in state.chance_outcomes():
            infosets_of(state.child(a), player, out)
        return out
    if cp == player:
        out.setdefault(state.info_state_key(), len(state.legal_actions()))
    for a in state.legal_actions():
        infosets_of(state.child(a), player, out)
    return out


def brute_force_best_value(root, player, opponent_mix):
    """Best pure-policy value for ``player`` against a mixture of opponent profiles.

    ``opponent_mix`` is a list of ``(prob, {q: policy_fn})``.
    """
    keys = infosets_of(root, player)
    names = list(keys)
    best = -np.inf
    for choice in itertools.product(*[range(keys[k]) for k in names]):
        table = dict(zip(names, choice))

        def mine(key, table=table):
            row = np.zeros(keys[key])
            row[table[key]] = 1.0
            return row

        v = 0.0
        for prob, others in opponent_mix:
            pols = dict(others)
            pols[player] = mine
            v += prob * walk_value(root, pols)[player]
        best = max(best, v)
    return best
