"""Built-in extensive-form games."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..normal_form import NormalFormGame
from .core import CHANCE, TERMINAL, GameTree, State

PASS, BET = 0, 1


class KuhnState(State):
    """Kuhn poker with ``n + 1`` cards, ante 1, a single bet size of 1.

    Players act in turn. Before any bet, ``PASS`` checks and ``BET`` bets;
    after the first bet every other player answers once, ``PASS`` folding and
    ``BET`` calling. The highest card among players who put in the bet wins
    the pot; if nobody bets, the highest card overall wins.
    """

    def __init__(self, n, cards=(), history=()):
        self.n = n
        self.cards = cards
        self.history = history

    def _first_bet(self):
        return self.history.index(BET) if BET in self.history else None

    def _done(self):
        if len(self.cards) < self.n:
            return False
        fb = self._first_bet()
        if fb is None:
            return len(self.history) == self.n
        return len(self.history) == fb + self.n

    def current_player(self):
        if len(self.cards) < self.n:
            return CHANCE
        if self._done():
            return TERMINAL
        return len(self.history) % self.n

    def legal_actions(self):
        return [PASS, BET]

    def chance_outcomes(self):
        left = [c for c in range(self.n + 1) if c not in self.cards]
        return [(c, 1.0 / len(left)) for c in left]

    def child(self, action):
        if len(self.cards) < self.n:
            return KuhnState(self.n, self.cards + (action,), self.history)
        return KuhnState(self.n, self.cards, self.history + (action,))

    def returns(self):
        n = self.n
        committed = np.ones(n)
        fb = self._first_bet()
        if fb is None:
            contenders = list(range(n))
        else:
            contenders = []
            for i, a in enumerate(self.history[fb:]):
                player = (fb + i) % n
                if a == BET:
                    committed[player] += 1
                    contenders.append(player)
        winner = max(contenders, key=lambda p: self.cards[p])
        out = -committed
        out[winner] += committed.sum()
        return out

    def info_state_key(self):
        p = self.current_player()
        hist = "".join("pb"[a] for a in self.history)
        return f"{p}:{self.cards[p]}:{hist}"


def kuhn_poker(num_players: int = 2) -> GameTree:
    if num_players not in (2, 3):
        raise ConfigError("Kuhn poker is provided for 2 or 3 players")
    return GameTree(KuhnState(num_players), num_players, name=f"kuhn_poker_{num_players}p")


class TradeCommState(State):
    """Two players each get a private item, exchange one utterance each, then
    secretly pick a trade ``give * I + receive``. Both score 1 exactly when the
    trades swap their actual items, else 0.
    """

    def __init__(self, items, dealt=(), utter=(), trades=()):
        self.items = items
        self.dealt = dealt
        self.utter = utter
        self.trades = trades

    def current_player(self):
        if len(self.dealt) < 2:
            return CHANCE
        if len(self.utter) < 2:
            return len(self.utter)
        if len(self.trades) < 2:
            return len(self.trades)
        return TERMINAL

    def legal_actions(self):
        if len(self.utter) < 2:
            return list(range(self.items))
        return list(range(self.items * self.items))

    def chance_outcomes(self):
        return [(i, 1.0 / self.items) for i in range(self.items)]

    def child(self, action):
        if len(self.dealt) < 2:
            return TradeCommState(self.items, self.dealt + (action,))
        if len(self.utter) < 2:
            return TradeCommState(self.items, self.dealt, self.utter + (action,))
        return TradeCommState(self.items, self.dealt, self.utter, self.trades + (action,))

    def returns(self):
        I = self.items
        x, y = self.dealt
        ok = self.trades[0] == x * I + y and self.trades[1] == y * I + x
        return [1.0, 1.0] if ok else [0.0, 0.0]

    def info_state_key(self):
        p = self.current_player()
        stage = "trade" if len(self.utter) == 2 else "utter"
        seen = ",".join(map(str, self.utter))
        return f"{p}:{stage}:item{self.dealt[p]}:u[{seen}]"


def trade_comm(num_items: int = 3) -> GameTree:
    if num_items < 1:
        raise ConfigError("trade_comm needs at least one item")
    return GameTree(TradeCommState(num_items), 2, name=f"trade_comm_{num_items}")


@dataclass(frozen=True)
class SheriffConfig:
    """Bargaining parameters. The defaults are provisional small values."""

    num_rounds: int = 2
    max_bribe: int = 3
    max_items: int = 3
    item_value: float = 1.0
    item_penalty: float = 2.0
    sheriff_penalty: float = 3.0

    def __post_init__(self):
        if self.num_rounds < 1 or self.max_bribe < 0 or self.max_items < 0:
            raise ConfigError("sheriff needs >= 1 round and non-negative bribe/item limits")


SMUGGLER, SHERIFF = 0, 1


class SheriffState(State):
    """The smuggler loads 0..max_items illegal items, then each round offers a
    bribe and the sheriff answers inspect (1) or pass (0). Only the last
    round's answer is binding.
    """

    def __init__(self, cfg: SheriffConfig, items=None, bribes=(), answers=()):
        self.cfg = cfg
        self.items = items
        self.bribes = bribes
        self.answers = answers

    def current_player(self):
        if self.items is None:
            return SMUGGLER
        if len(self.answers) == self.cfg.num_rounds:
            return TERMINAL
        return SMUGGLER if len(self.bribes) == len(self.answers) else SHERIFF

    def legal_actions(self):
        if self.items is None:
            return list(range(self.cfg.max_items + 1))
        if self.current_player() == SMUGGLER:
            return list(range(self.cfg.max_bribe + 1))
        return [0, 1]

    def child(self, action):
        if self.items is None:
            return SheriffState(self.cfg, action)
        if self.current_player() == SMUGGLER:
            return SheriffState(self.cfg, self.items, self.bribes + (action,), self.answers)
        return SheriffState(self.cfg, self.items, self.bribes, self.answers + (action,))

    def returns(self):
        c = self.cfg
        bribe = self.bribes[-1]
        n = self.items
        if self.answers[-1] == 0:
            return [n * c.item_value - bribe, float(bribe)]
        if n > 0:
            return [-n * c.item_penalty, n * c.item_penalty]
        return [c.sheriff_penalty, -c.sheriff_penalty]

    def info_state_key(self):
        p = self.current_player()
        talk = ",".join(f"{b}/{a}" for b, a in zip(self.bribes, self.answers + ("?",)))
        if p == SMUGGLER:
            items = "load" if self.items is None else str(self.items)
            return f"smuggler:{items}:{talk}"
        return f"sheriff:{talk}"


def sheriff(cfg: SheriffConfig = SheriffConfig()) -> GameTree:
    return GameTree(SheriffState(cfg), 2, name="sheriff")


class NormalFormState(State):
    """A normal-form game played as one simultaneous move (players act blind)."""

    def __init__(self, game: NormalFormGame, actions=()):
        self.game = game
        self.actions = actions

    def current_player(self):
        return TERMINAL if len(self.actions) == self.game.num_players else len(self.actions)

    def legal_actions(self):
        return list(range(self.game.actions_per_player[len(self.actions)]))

    def child(self, action):
        return NormalFormState(self.game, self.actions + (action,))

    def returns(self):
        return self.game.payoffs[(slice(None),) + self.actions]

    def info_state_key(self):
        return f"player{len(self.actions)}"


def normal_form_as_tree(game: NormalFormGame) -> GameTree:
    return GameTree(NormalFormState(game), game.num_players, name="normal_form")


BUILTIN_TREES = {
    "kuhn2p": lambda: kuhn_poker(2),
    "kuhn3p": lambda: kuhn_poker(3),
    "trade_comm": lambda: trade_comm(3),
    "sheriff": lambda: sheriff(),
}
