"""Tabular policies and the per-player policy pools JPSRO grows."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .core import GameTree

_uids = itertools.count()


class TabularPolicy:
    """Action distribution per information state of one player. Immutable."""

    __slots__ = ("player", "table", "uid", "label")

    def __init__(self, player: int, table: dict, label: str = ""):
        frozen = {}
        for key, probs in table.items():
            arr = np.array(probs, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ConfigError(f"policy entry {key!r} is not a probability vector")
            if arr.min() < -1e-12 or abs(arr.sum() - 1.0) > 1e-9:
                raise ConfigError(f"policy entry {key!r} is not a distribution: {arr}")
            arr.setflags(write=False)
            frozen[key] = arr
        self.player = player
        self.table = frozen
        self.uid = next(_uids)
        self.label = label

    def __repr__(self):
        return f"TabularPolicy(player={self.player}, states={len(self.table)}, label={self.label!r})"

    def action_probs(self, key) -> np.ndarray:
        return self.table[key]

    @classmethod
    def uniform(cls, tree: GameTree, player: int) -> "TabularPolicy":
        tables = tree.players[player]
        return cls(player, {k: np.full(n, 1.0 / n) for k, n in zip(tables.keys, tables.num_actions)},
                   label="uniform")

    @classmethod
    def deterministic(cls, tree: GameTree, player: int, choices) -> "TabularPolicy":
        """Pure policy from one action index per infoset, in infoset order."""
        tables = tree.players[player]
        table = {}
        for key, n, a in zip(tables.keys, tables.num_actions, choices):
            row = np.zeros(n)
            row[a] = 1.0
            table[key] = row
        return cls(player, table)

    def canonical(self, tree: GameTree) -> "TabularPolicy":
        """Same behaviour, with states the policy itself never reaches set to uniform."""
        tables = tree.players[self.player]
        x = tree.realization(self)
        table = {}
        for info, key in enumerate(tables.keys):
            n = tables.num_actions[info]
            if x[tables.parent_seq[info]] == 0.0 or key not in self.table:
                table[key] = np.full(n, 1.0 / n)
            else:
                table[key] = self.table[key]
        return TabularPolicy(self.player, table, label=self.label)

    def fingerprint(self, tree: GameTree) -> bytes:
        """Exact identity of the canonical behaviour, for counting unique policies."""
        canon = self.canonical(tree)
        return b"".join(canon.table[k].tobytes() for k in tree.players[self.player].keys)


def dump_policy(policy: TabularPolicy, path) -> None:
    """Write one ``key<TAB>p_0 p_1 ...`` line per state; floats in repr form."""
    lines = [f"# player {policy.player}"]
    for key in sorted(policy.table):
        if "\t" in key or "\n" in key:
            raise ConfigError(f"info state key {key!r} cannot be written to a policy table")
        probs = " ".join(repr(float(p)) for p in policy.table[key])
        lines.append(f"{key}\t{probs}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path) -> TabularPolicy:
    player = None
    table = {}
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        if line.startswith("# player "):
            player = int(line.split()[-1])
            continue
        key, _, probs = line.partition("\t")
        table[key] = [float(p) for p in probs.split()]
    if player is None:
        raise ConfigError(f"policy file {path} lacks a player header")
    return TabularPolicy(player, table)


@dataclass
class JointPolicyPool:
    """Ordered multiset of policies per player, plus an insertion log.

    With ``semantics == "set"`` a policy whose canonical behaviour is already
    present is not inserted again.
    """

    tree: GameTree
    policies: list
    semantics: str = "multiset"
    log: list = field(default_factory=list)
    _fingerprints: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.semantics not in ("multiset", "set"):
            raise ConfigError("pool semantics must be multiset or set")
        if len(self.policies) != self.tree.num_players:
            raise ConfigError("need one policy list per player")
        self._fingerprints = [[p.fingerprint(self.tree) for p in pols] for pols in self.policies]

    @classmethod
    def initial(cls, tree: GameTree, semantics="multiset") -> "JointPolicyPool":
        pool = cls(tree, [[TabularPolicy.uniform(tree, p)] for p in range(tree.num_players)], semantics)
        for p in range(tree.num_players):
            pool.log.append((0, p, 0))
        return pool

    @property
    def sizes(self) -> tuple:
        return tuple(len(p) for p in self.policies)

    def add(self, player: int, policy: TabularPolicy, iteration: int) -> bool:
        """Insert ``policy``; returns False when set semantics rejects a duplicate."""
        if policy.player != player:
            raise ConfigError("policy belongs to a different player")
        fp = policy.fingerprint(self.tree)
        if self.semantics == "set" and fp in self._fingerprints[player]:
            return False
        self.policies[player].append(policy)
        self._fingerprints[player].append(fp)
        self.log.append((iteration, player, len(self.policies[player]) - 1))
        return True

    def contains_behaviour(self, player: int, policy: TabularPolicy) -> bool:
        return policy.fingerprint(self.tree) in self._fingerprints[player]

    def unique_counts(self) -> list:
        return [len(set(fps)) for fps in self._fingerprints]
