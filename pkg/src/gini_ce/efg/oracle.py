"""Exact evaluation and best-response oracles over mixtures of joint policies."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ZeroSupportRecommendation
from ..normal_form import NormalFormGame
from .core import GameTree
from .policy import JointPolicyPool, TabularPolicy

TIE_TOL = 1e-12


def expected_return(tree: GameTree, joint) -> np.ndarray:
    """Exact expected payoff of every player under one policy per player."""
    if len(joint) != tree.num_players:
        raise ConfigError("need one policy per player")
    reach = tree.chance_reach.copy()
    for policy in joint:
        reach = reach * tree.terminal_reach(policy)
    return tree.terminal_returns.T @ reach


def _letters(n):
    return string.ascii_letters[:n]


class MetaGameEstimator:
    """Builds the meta-game payoff tensor of a pool, reusing earlier cells.

    The cache is keyed by the policy ids in each player's list; when the
    cached lists are prefixes of the current ones only the new slices are
    evaluated. Every cell is produced by the same unoptimized einsum kernel
    (one sum over terminals per cell), so cached and fresh tensors agree bit
    for bit.
    """

    def __init__(self, tree: GameTree):
        self.tree = tree
        self._uids = None
        self._tensor = None
        self._weighted = tree.terminal_returns.T * tree.chance_reach  # [n, Z]

    def _block(self, reach_blocks):
        n = self.tree.num_players
        letters = _letters(n)
        spec = "z," + ",".join(f"{c}z" for c in letters) + "->" + letters
        out = np.empty((n,) + tuple(r.shape[0] for r in reach_blocks))
        for p in range(n):
            out[p] = np.einsum(spec, self._weighted[p], *reach_blocks, optimize=False)
        return out

    def estimate(self, pool: JointPolicyPool) -> NormalFormGame:
        tree = self.tree
        n = tree.num_players
        uids = [[pol.uid for pol in pols] for pols in pool.policies]
        reach = [np.array([tree.terminal_reach(pol) for pol in pols]) for pols in pool.policies]
        sizes = tuple(len(u) for u in uids)
        reuse = self._uids is not None and all(
            len(old) <= len(new) and new[:len(old)] == old for old, new in zip(self._uids, uids))
        if not reuse:
            tensor = self._block(reach)
        else:
            old_sizes = tuple(len(u) for u in self._uids)
            tensor = np.empty((n,) + sizes)
            tensor[(slice(None),) + tuple(slice(0, k) for k in old_sizes)] = self._tensor
            # Region q: players before q old, player q new, players after q anything.
            for q in range(n):
                if sizes[q] == old_sizes[q]:
                    continue
                ranges = [slice(0, old_sizes[r]) if r < q else slice(None) for r in range(n)]
                ranges[q] = slice(old_sizes[q], sizes[q])
                blocks = [reach[r][ranges[r]] for r in range(n)]
                tensor[(slice(None),) + tuple(ranges)] = self._block(blocks)
        self._uids = uids
        self._tensor = tensor
        return NormalFormGame(tensor)


def estimate_meta_game(tree: GameTree, pool: JointPolicyPool, estimator: MetaGameEstimator | None = None):
    return (estimator or MetaGameEstimator(tree)).estimate(pool)


@dataclass
class BrResult:
    policy: TabularPolicy
    gap: float
    br_value: float
    on_path_value: float
    conditioned_on: int | None = None


def opponent_weights(tree: GameTree, pool: JointPolicyPool, sigma_others, player: int) -> np.ndarray:
    """``w(z) = chance(z) * sum_{pi_-p} sigma(pi_-p) prod_{q != p} reach_q(pi_q, z)``.

    ``sigma_others`` is indexed by the pool positions of the other players in
    player order.
    """
    n = tree.num_players
    others = [q for q in range(n) if q != player]
    sigma_others = np.asarray(sigma_others, dtype=float)
    if not others:
        return tree.chance_reach.copy()
    letters = _letters(len(others))
    reach = [np.array([tree.terminal_reach(pol) for pol in pool.policies[q]]) for q in others]
    spec = letters + "," + ",".join(f"{c}z" for c in letters) + "->z"
    return tree.chance_reach * np.einsum(spec, sigma_others, *reach, optimize=True)


def best_response_to_weights(tree: GameTree, player: int, weights) -> tuple[TabularPolicy, float]:
    """Pure best response maximizing ``sum_z w(z) u_p(z) reach_p(z)``.

    One bottom-up sweep over the player's infosets. Ties go to the lowest
    action index; infosets the opponents and chance never reach get uniform
    play.
    """
    tables = tree.players[player]
    last = tree.last_seq[player]
    w = np.asarray(weights, dtype=float)
    value = np.bincount(last, weights=w * tree.terminal_returns[:, player], minlength=tables.num_seqs)
    mass = np.bincount(last, weights=w, minlength=tables.num_seqs)
    choice = {}
    for info in range(tables.num_infosets - 1, -1, -1):
        start = tables.seq_start[info]
        k = tables.num_actions[info]
        q = value[start:start + k]
        m = mass[start:start + k].sum()
        key = tables.keys[info]
        if m == 0.0:
            choice[key] = np.full(k, 1.0 / k)
            best = 0.0
        else:
            top = q.max()
            a = int(np.nonzero(q >= top - TIE_TOL * max(1.0, abs(top)))[0][0])
            row = np.zeros(k)
            row[a] = 1.0
            choice[key] = row
            best = q[a]
        parent = tables.parent_seq[info]
        value[parent] += best
        mass[parent] += m
    ordered = {key: choice[key] for key in tables.keys}
    return TabularPolicy(player, ordered, label="br"), float(value[0])


def _marginal_others(sigma, player):
    return np.asarray(sigma).sum(axis=player)


def _check_sigma(sigma, pool):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size != int(np.prod(pool.sizes)):
        raise ConfigError(f"sigma has {sigma.size} entries for pool sizes {pool.sizes}")
    return sigma.reshape(pool.sizes)


def on_path_value(meta_game: NormalFormGame, sigma, player: int) -> float:
    return float(meta_game.payoffs[player].ravel() @ np.asarray(sigma).ravel())


def best_response_cce(tree: GameTree, pool: JointPolicyPool, sigma, player: int,
                      meta_game: NormalFormGame | None = None) -> BrResult:
    """Best response to the opponents' marginal of ``sigma``; gap is unclamped."""
    sigma = _check_sigma(sigma, pool)
    meta_game = meta_game or estimate_meta_game(tree, pool)
    w = opponent_weights(tree, pool, _marginal_others(sigma, player), player)
    policy, br_value = best_response_to_weights(tree, player, w)
    v = on_path_value(meta_game, sigma, player)
    return BrResult(policy, br_value - v, br_value, v)


def best_response_ce(tree: GameTree, pool: JointPolicyPool, sigma, player: int, recommended: int,
                     meta_game: NormalFormGame | None = None) -> BrResult:
    """Best response to the opponents' conditional given ``recommended`` for ``player``."""
    sigma = _check_sigma(sigma, pool)
    meta_game = meta_game or estimate_meta_game(tree, pool)
    rec_slice = np.take(sigma, recommended, axis=player)
    mass = rec_slice.sum()
    if mass <= 0.0:
        raise ZeroSupportRecommendation(
            f"player {player} policy {recommended} has zero probability under sigma")
    cond = rec_slice / mass
    w = opponent_weights(tree, pool, cond, player)
    policy, br_value = best_response_to_weights(tree, player, w)
    g = np.take(meta_game.payoffs[player], recommended, axis=player)
    v = float(g.ravel() @ cond.ravel())
    return BrResult(policy, br_value - v, br_value, v, conditioned_on=recommended)
