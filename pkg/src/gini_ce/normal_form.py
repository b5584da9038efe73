"""Normal-form games and their (C)CE constraint systems.

Joint actions are flattened row-major over players in declaration order, so
joint index ``j`` of a game with ``actions_per_player == (2, 3)`` is
``np.ravel_multi_index((a1, a2), (2, 3))``. Every distribution in the package
uses this layout.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError

log = logging.getLogger(__name__)

CE = "CE"
CCE = "CCE"
TOL_FEAS = 1e-8


@dataclass(frozen=True)
class NormalFormGame:
    """Payoff tensor of shape ``[n, |A_1|, ..., |A_n|]``."""

    payoffs: np.ndarray
    action_names: tuple | None = None

    def __post_init__(self):
        payoffs = np.array(self.payoffs, dtype=float)
        if payoffs.ndim < 2 or payoffs.shape[0] != payoffs.ndim - 1:
            raise ConfigError(
                f"payoff tensor shape {payoffs.shape} is not [n, |A_1|, ..., |A_n|]")
        if any(s < 1 for s in payoffs.shape[1:]):
            raise ConfigError("every player needs at least one action")
        if not np.all(np.isfinite(payoffs)):
            raise ConfigError("payoffs must be finite")
        payoffs.setflags(write=False)
        object.__setattr__(self, "payoffs", payoffs)

    @property
    def num_players(self) -> int:
        return self.payoffs.shape[0]

    @property
    def actions_per_player(self) -> tuple[int, ...]:
        return tuple(self.payoffs.shape[1:])

    @property
    def num_joint(self) -> int:
        return int(np.prod(self.actions_per_player))

    def payoff_matrix(self) -> np.ndarray:
        """Payoffs as ``[n, |A|]`` with joint actions flattened."""
        return self.payoffs.reshape(self.num_players, -1)

    def welfare(self) -> np.ndarray:
        """Sum of payoffs over players for every joint action."""
        return self.payoff_matrix().sum(axis=0)

    def affine_transform(self, scales, offsets) -> "NormalFormGame":
        scales = np.asarray(scales, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if np.any(scales <= 0):
            raise ConfigError("affine scales must be positive")
        shape = (-1,) + (1,) * (self.payoffs.ndim - 1)
        return NormalFormGame(self.payoffs * scales.reshape(shape) + offsets.reshape(shape))

    def to_dict(self) -> dict:
        return {
            "num_players": self.num_players,
            "actions_per_player": list(self.actions_per_player),
            "payoffs": self.payoffs.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalFormGame":
        try:
            n = int(doc["num_players"])
            actions = [int(a) for a in doc["actions_per_player"]]
            flat = np.asarray(doc["payoffs"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed game document: {exc}") from exc
        if len(actions) != n:
            raise ConfigError(
                f"actions_per_player has {len(actions)} entries for {n} players")
        expected = n * int(np.prod(actions))
        if flat.size != expected:
            raise ConfigError(f"payoffs has {flat.size} entries, expected {expected}")
        return cls(flat.reshape([n] + actions))


def load_game(path) -> NormalFormGame:
    """Read a game file (JSON with num_players, actions_per_player, payoffs)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"game file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"game file {path} is not valid JSON: {exc}") from exc
    return NormalFormGame.from_dict(doc)


def save_game(game: NormalFormGame, path) -> None:
    Path(path).write_text(json.dumps(game.to_dict(), indent=1) + "\n")


# A few classic games used throughout the tests and the CLI.

def traffic_lights() -> NormalFormGame:
    """Go/Wait anti-coordination game. Action 0 is Go, 1 is Wait."""
    row = [[-10.0, 1.0], [0.0, 0.0]]
    col = [[-10.0, 0.0], [1.0, 0.0]]
    return NormalFormGame(np.array([row, col]), action_names=("G", "W"))


def matching_pennies() -> NormalFormGame:
    row = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return NormalFormGame(np.array([row, -row]))


def prisoners_dilemma() -> NormalFormGame:
    """Action 0 cooperates, action 1 defects."""
    row = np.array([[-1.0, -3.0], [0.0, -2.0]])
    return NormalFormGame(np.array([row, row.T]))


def chicken() -> NormalFormGame:
    row = np.array([[0.0, -1.0], [1.0, -10.0]])
    return NormalFormGame(np.array([row, row.T]))


def constant_game(actions_per_player: Sequence[int], value: float = 1.0) -> NormalFormGame:
    n = len(actions_per_player)
    return NormalFormGame(np.full([n] + list(actions_per_player), float(value)))


BUILTIN_GAMES = {
    "traffic_lights": traffic_lights,
    "matching_pennies": matching_pennies,
    "prisoners_dilemma": prisoners_dilemma,
    "chicken": chicken,
}


@dataclass(frozen=True)
class ConstraintSystem:
    """Linear (C)CE constraints ``A sigma <= epsilon`` over joint actions.

    ``row_index`` labels each row: ``(p, recommended, deviation)`` for CE rows
    and ``(p, deviation)`` for CCE rows. ``epsilon_weights`` maps a scalar
    epsilon onto the rows (all ones unless the system comes from a reduced
    game), and ``weights`` are the per-joint objective weights of the Gini
    term ``1/2 sum_j weights_j sigma_j^2`` (``None`` means all ones).
    """

    A: sp.csr_matrix
    epsilon: np.ndarray
    kind: str
    row_index: tuple
    epsilon_weights: np.ndarray
    weights: np.ndarray | None = None
    shape: tuple = ()
    _dense: list = field(default_factory=list, repr=False, compare=False)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_joint(self) -> int:
        return self.A.shape[1]

    def dense(self) -> np.ndarray:
        if not self._dense:
            self._dense.append(self.A.toarray())
        return self._dense[0]

    def with_epsilon(self, epsilon) -> "ConstraintSystem":
        """Copy with a new epsilon: a scalar (spread by ``epsilon_weights``) or a vector."""
        eps = np.asarray(epsilon, dtype=float)
        if eps.ndim == 0:
            eps = float(eps) * self.epsilon_weights
        elif eps.shape != (self.num_rows,):
            raise ConfigError(f"epsilon vector has shape {eps.shape}, need ({self.num_rows},)")
        return ConstraintSystem(self.A, eps.copy(), self.kind, self.row_index,
                                self.epsilon_weights, self.weights, self.shape, self._dense)

    def subset_rows(self, keep) -> "ConstraintSystem":
        keep = np.asarray(keep)
        return ConstraintSystem(
            self.A[keep], self.epsilon[keep], self.kind,
            tuple(r for r, k in zip(self.row_index, keep) if k),
            self.epsilon_weights[keep], self.weights, self.shape)


def _player_slice(n, p, index):
    sl = [slice(None)] * n
    sl[p] = index
    return tuple(sl)


def build_ce_constraints(game: NormalFormGame, reduction: "ReductionMap | None" = None) -> ConstraintSystem:
    """CE advantage rows for every player and ordered pair ``a != a'``.

    The entry at joint ``(a, a_-p)`` of row ``(p, a, a')`` is
    ``G_p(a', a_-p) - G_p(a, a_-p)``; all other joints are structural zeros.
    """
    n = game.num_players
    shape = game.actions_per_player
    num_joint = game.num_joint
    joint_ids = np.arange(num_joint).reshape(shape)
    rows, cols, vals, labels, eps_w = [], [], [], [], []
    row = 0
    for p in range(n):
        gp = game.payoffs[p]
        for a in range(shape[p]):
            here = gp[_player_slice(n, p, a)]
            ids = joint_ids[_player_slice(n, p, a)].ravel()
            for a_dev in range(shape[p]):
                if a_dev == a:
                    continue
                gain = (gp[_player_slice(n, p, a_dev)] - here).ravel()
                rows.append(np.full(ids.size, row))
                cols.append(ids)
                vals.append(gain)
                labels.append((p, a, a_dev))
                eps_w.append(1.0 if reduction is None else float(reduction.repeat_counts[p][a]))
                row += 1
    return _assemble(rows, cols, vals, labels, eps_w, row, num_joint, CE, game, reduction)


def build_cce_constraints(game: NormalFormGame, reduction: "ReductionMap | None" = None) -> ConstraintSystem:
    """CCE rows ``(p, a')``: gain ``G_p(a', a_-p) - G_p(a)`` at every joint ``a``."""
    n = game.num_players
    shape = game.actions_per_player
    num_joint = game.num_joint
    rows, cols, vals, labels = [], [], [], []
    all_ids = np.arange(num_joint)
    for p in range(n):
        gp = game.payoffs[p]
        for a_dev in range(shape[p]):
            dev = gp[_player_slice(n, p, slice(a_dev, a_dev + 1))]
            gain = (np.broadcast_to(dev, shape) - gp).ravel()
            rows.append(np.full(num_joint, len(labels)))
            cols.append(all_ids)
            vals.append(gain)
            labels.append((p, a_dev))
    return _assemble(rows, cols, vals, labels, [1.0] * len(labels), len(labels),
                     num_joint, CCE, game, reduction)


def _assemble(rows, cols, vals, labels, eps_w, num_rows, num_joint, kind, game, reduction):
    if num_rows:
        coo = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(num_rows, num_joint))
    else:
        coo = sp.coo_matrix((0, num_joint))
    # coo -> csr keeps explicit zeros, so the structural pattern survives.
    A = coo.tocsr()
    weights = None if reduction is None else 1.0 / reduction.joint_repeats()
    return ConstraintSystem(A, np.zeros(num_rows), kind, tuple(labels),
                            np.asarray(eps_w, dtype=float), weights, game.actions_per_player)


def build_constraints(game: NormalFormGame, kind: str, reduction=None) -> ConstraintSystem:
    kind = kind.upper()
    if kind == CE:
        return build_ce_constraints(game, reduction)
    if kind == CCE:
        return build_cce_constraints(game, reduction)
    raise ConfigError(f"unknown equilibrium kind {kind!r}")


@dataclass
class ReductionMap:
    """How a reduced game's actions map back onto the original game.

    ``class_of[p][a]`` is the reduced index of original action ``a`` of player
    ``p`` (``-1`` once removed); ``repeat_counts[p]`` counts the original
    copies behind each kept action.
    """

    original_actions: tuple
    kept_actions: list
    repeat_counts: list
    class_of: list
    removal_log: list = field(default_factory=list)

    @classmethod
    def identity(cls, actions_per_player) -> "ReductionMap":
        return cls(
            original_actions=tuple(actions_per_player),
            kept_actions=[list(range(k)) for k in actions_per_player],
            repeat_counts=[np.ones(k, dtype=int) for k in actions_per_player],
            class_of=[np.arange(k) for k in actions_per_player],
        )

    @property
    def is_identity(self) -> bool:
        return not self.removal_log

    def joint_repeats(self) -> np.ndarray:
        """Flattened product of per-player repeat counts over reduced joints."""
        r = np.ones(1)
        for counts in self.repeat_counts:
            r = np.multiply.outer(r, counts)
        return r.ravel().astype(float)

    def expand(self, sigma) -> np.ndarray:
        """Lift a reduced-game distribution to the original joint space.

        Mass on a kept action is shared evenly by its copies; removed actions
        get zero.
        """
        reduced_shape = tuple(len(k) for k in self.kept_actions)
        x = np.asarray(sigma, dtype=float).reshape(reduced_shape) / self.joint_repeats().reshape(reduced_shape)
        idx = []
        for cls in self.class_of:
            idx.append(np.where(cls >= 0, cls, 0))
        out = x[np.ix_(*idx)]
        for p, cls in enumerate(self.class_of):
            removed = cls < 0
            if removed.any():
                out[_player_slice(len(self.class_of), p, removed)] = 0.0
        return out.ravel()

    def restrict(self, sigma) -> np.ndarray:
        """Project an original-space distribution onto reduced joints (sums copies)."""
        full = np.asarray(sigma, dtype=float).reshape(self.original_actions)
        out = full
        for p, cls in enumerate(self.class_of):
            k = len(self.kept_actions[p])
            summed = np.zeros(out.shape[:p] + (k,) + out.shape[p + 1:])
            for a, c in enumerate(cls):
                if c >= 0:
                    summed[_player_slice(out.ndim, p, c)] += out[_player_slice(out.ndim, p, a)]
            out = summed
        return out.ravel()


def eliminate_repeated_actions(game: NormalFormGame, reduction: ReductionMap | None = None):
    """Merge actions of a player whose payoff slices coincide for every player.

    Returns the reduced game and a ReductionMap whose ``repeat_counts`` feed
    the weighted Gini objective.
    """
    reduction = reduction or ReductionMap.identity(game.actions_per_player)
    payoffs = game.payoffs
    n = game.num_players
    for p in range(n):
        k = payoffs.shape[p + 1]
        seen = {}
        keep = []
        merged_into = np.arange(k)
        for a in range(k):
            key = np.ascontiguousarray(np.take(payoffs, a, axis=p + 1)).tobytes()
            if key in seen:
                merged_into[a] = seen[key]
                reduction.removal_log.append((p, int(reduction.kept_actions[p][a]), "repeated"))
            else:
                seen[key] = a
                keep.append(a)
        if len(keep) == k:
            continue
        new_pos = {a: i for i, a in enumerate(keep)}
        counts = np.zeros(len(keep), dtype=int)
        for a in range(k):
            counts[new_pos[merged_into[a]]] += reduction.repeat_counts[p][a]
        old_to_new = np.array([new_pos[merged_into[a]] for a in range(k)])
        reduction.class_of[p] = np.where(reduction.class_of[p] >= 0,
                                         old_to_new[np.maximum(reduction.class_of[p], 0)], -1)
        reduction.kept_actions[p] = [reduction.kept_actions[p][a] for a in keep]
        reduction.repeat_counts[p] = counts
        payoffs = np.take(payoffs, keep, axis=p + 1)
    return NormalFormGame(payoffs), reduction


def eliminate_dominated_actions(game: NormalFormGame, reduction: ReductionMap | None = None):
    """Iterated elimination of strictly dominated pure strategies.

    Only valid ahead of solves with epsilon <= 0. Run repeated-action
    elimination first: copies never dominate each other.
    """
    reduction = reduction or ReductionMap.identity(game.actions_per_player)
    payoffs = game.payoffs
    n = game.num_players
    changed = True
    while changed:
        changed = False
        for p in range(n):
            k = payoffs.shape[p + 1]
            if k <= 1:
                continue
            gp = np.moveaxis(payoffs[p], p, 0).reshape(k, -1)
            dominated = None
            for a in range(k):
                better = np.all(gp > gp[a], axis=1)
                if better.any():
                    dominated = a
                    break
            if dominated is None:
                continue
            keep = [a for a in range(k) if a != dominated]
            reduction.removal_log.append((p, int(reduction.kept_actions[p][dominated]), "dominated"))
            old_to_new = np.full(k, -1)
            old_to_new[keep] = np.arange(k - 1)
            reduction.class_of[p] = np.where(reduction.class_of[p] >= 0,
                                             old_to_new[np.maximum(reduction.class_of[p], 0)], -1)
            reduction.kept_actions[p] = [reduction.kept_actions[p][a] for a in keep]
            reduction.repeat_counts[p] = np.asarray(reduction.repeat_counts[p])[keep]
            payoffs = np.take(payoffs, keep, axis=p + 1)
            changed = True
    return NormalFormGame(payoffs), reduction


def normalize_rows(cs: ConstraintSystem) -> ConstraintSystem:
    """Scale each row (and its epsilon) to unit L2 norm; drop all-zero rows."""
    norms = sp.linalg.norm(cs.A, axis=1) if cs.num_rows else np.zeros(0)
    nonzero = norms > 0
    if not nonzero.all():
        log.info("dropping %d all-zero constraint rows", int((~nonzero).sum()))
        cs = cs.subset_rows(nonzero)
        norms = norms[nonzero]
    scale = sp.diags(1.0 / norms) if norms.size else sp.csr_matrix((0, 0))
    A = (scale @ cs.A).tocsr() if norms.size else cs.A
    return ConstraintSystem(A, cs.epsilon / norms, cs.kind, cs.row_index,
                            cs.epsilon_weights / norms, cs.weights, cs.shape)


def gini_impurity(sigma, weights=None) -> float:
    """``1 - sigma^T sigma``, or ``1 - sum_j w_j sigma_j^2`` with repeat weights."""
    sigma = np.asarray(sigma, dtype=float)
    if weights is None:
        return float(1.0 - sigma @ sigma)
    return float(1.0 - sigma @ (np.asarray(weights) * sigma))


def constraint_violation(cs: ConstraintSystem, sigma):
    """Return ``(max(A sigma - eps), A sigma - eps)``; ``-inf`` when there are no rows."""
    per_row = cs.A @ np.asarray(sigma, dtype=float) - cs.epsilon
    worst = float(per_row.max()) if per_row.size else -np.inf
    return worst, per_row


def uniform(num_joint: int) -> np.ndarray:
    return np.full(num_joint, 1.0 / num_joint)


def clean_distribution(sigma, tol=TOL_FEAS) -> np.ndarray:
    """Clamp tiny negatives to zero and renormalize; reject real violations."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.min(initial=0.0) < -tol:
        raise ValueError(f"distribution has entry {sigma.min():.3g} below -{tol:g}")
    if abs(sigma.sum() - 1.0) > max(tol, 1e-6):
        raise ValueError(f"distribution sums to {sigma.sum():.12g}")
    sigma = np.maximum(sigma, 0.0)
    return sigma / sigma.sum()


def marginals(sigma, shape) -> list[np.ndarray]:
    """Per-player marginal distributions of a flattened joint distribution."""
    full = np.asarray(sigma, dtype=float).reshape(shape)
    n = len(shape)
    return [full.sum(axis=tuple(q for q in range(n) if q != p)) for p in range(n)]


def expected_payoffs(game: NormalFormGame, sigma) -> np.ndarray:
    return game.payoff_matrix() @ np.asarray(sigma, dtype=float)
