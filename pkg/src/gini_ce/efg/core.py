"""Game-tree protocol and its compiled sequence-form representation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

CHANCE = -1
TERMINAL = -2


class State:
    """Minimal interface a game state must offer to be compiled.

    Decision states report ``current_player() >= 0``; chance states report
    ``CHANCE`` and list ``chance_outcomes()``; terminal states report
    ``TERMINAL`` and ``returns()``.
    """

    def current_player(self) -> int:
        raise NotImplementedError

    def legal_actions(self) -> list:
        raise NotImplementedError

    def chance_outcomes(self) -> list:
        raise NotImplementedError

    def child(self, action) -> "State":
        raise NotImplementedError

    def returns(self):
        raise NotImplementedError

    def info_state_key(self) -> str:
        raise NotImplementedError


@dataclass
class PlayerTables:
    """Sequence-form tables of one player.

    Sequence 0 is the empty sequence. Infoset ``i`` owns sequences
    ``seq_start[i] .. seq_start[i] + num_actions[i] - 1`` and is entered from
    ``parent_seq[i]``. Infosets are numbered in discovery (pre-)order, so a
    parent sequence always belongs to an earlier infoset.
    """

    keys: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    num_actions: list = field(default_factory=list)
    parent_seq: list = field(default_factory=list)
    seq_start: list = field(default_factory=list)
    num_seqs: int = 1

    def finalize(self):
        self.num_actions = np.asarray(self.num_actions, dtype=int)
        self.parent_seq = np.asarray(self.parent_seq, dtype=int)
        self.seq_start = np.asarray(self.seq_start, dtype=int)

    @property
    def num_infosets(self) -> int:
        return len(self.keys)


class GameTree:
    """A game compiled to flat arrays.

    ``terminal_returns[z]`` holds every player's payoff at terminal ``z``,
    ``chance_reach[z]`` the product of chance probabilities on its path and
    ``last_seq[p, z]`` the final sequence of player ``p`` on that path.
    """

    def __init__(self, root: State, num_players: int, name: str = "game"):
        self.name = name
        self.num_players = num_players
        self.players = [PlayerTables() for _ in range(num_players)]
        returns, chance, last = [], [], []
        num_nodes = 0
        stack = [(root, 1.0, (0,) * num_players)]
        while stack:
            state, reach, seqs = stack.pop()
            num_nodes += 1
            player = state.current_player()
            if player == TERMINAL:
                r = np.asarray(state.returns(), dtype=float)
                if r.shape != (num_players,) or not np.all(np.isfinite(r)):
                    raise ConfigError(f"terminal returns {r} are not {num_players} finite values")
                returns.append(r)
                chance.append(reach)
                last.append(seqs)
            elif player == CHANCE:
                outcomes = state.chance_outcomes()
                total = sum(p for _, p in outcomes)
                if abs(total - 1.0) > 1e-12:
                    raise ConfigError(f"chance probabilities sum to {total}")
                for action, prob in reversed(outcomes):
                    if prob > 0:
                        stack.append((state.child(action), reach * prob, seqs))
            else:
                tables = self.players[player]
                key = state.info_state_key()
                actions = state.legal_actions()
                info = tables.index.get(key)
                if info is None:
                    info = len(tables.keys)
                    tables.index[key] = info
                    tables.keys.append(key)
                    tables.num_actions.append(len(actions))
                    tables.parent_seq.append(seqs[player])
                    tables.seq_start.append(tables.num_seqs)
                    tables.num_seqs += len(actions)
                elif tables.num_actions[info] != len(actions):
                    raise ConfigError(f"infoset {key!r} has inconsistent action counts")
                elif tables.parent_seq[info] != seqs[player]:
                    raise ConfigError(f"infoset {key!r} violates perfect recall")
                start = tables.seq_start[info]
                for a in reversed(range(len(actions))):
                    child_seqs = seqs[:player] + (start + a,) + seqs[player + 1:]
                    stack.append((state.child(actions[a]), reach, child_seqs))
        for tables in self.players:
            tables.finalize()
        self.terminal_returns = np.array(returns)
        self.chance_reach = np.array(chance)
        self.last_seq = np.array(last, dtype=int).T.copy()
        self.num_nodes = num_nodes
        self._realizations: dict = {}

    @property
    def num_terminals(self) -> int:
        return self.chance_reach.size

    def realization(self, policy) -> np.ndarray:
        """Own-reach probability of every sequence of ``policy.player`` (cached by policy id)."""
        key = policy.uid
        cached = self._realizations.get(key)
        if cached is not None:
            return cached
        x = realization_plan(self, policy)
        self._realizations[key] = x
        return x

    def terminal_reach(self, policy) -> np.ndarray:
        """Own-reach of ``policy`` at every terminal."""
        return self.realization(policy)[self.last_seq[policy.player]]


def realization_plan(tree: GameTree, policy) -> np.ndarray:
    from ..errors import MissingInfoState

    tables = tree.players[policy.player]
    x = np.zeros(tables.num_seqs)
    x[0] = 1.0
    for info, key in enumerate(tables.keys):
        parent = x[tables.parent_seq[info]]
        if parent == 0.0:
            continue
        probs = policy.table.get(key)
        if probs is None:
            raise MissingInfoState(key)
        k = tables.num_actions[info]
        if len(probs) != k:
            raise ConfigError(f"policy gives {len(probs)} probabilities at {key!r}, needs {k}")
        start = tables.seq_start[info]
        x[start:start + k] = parent * np.asarray(probs)
    return x
