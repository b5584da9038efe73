"""Extensive-form games: compiled trees, tabular policies and exact oracles."""

from .core import CHANCE, TERMINAL, GameTree, State
from .games import (BUILTIN_TREES, SheriffConfig, kuhn_poker, normal_form_as_tree,
                    sheriff, trade_comm)
from .oracle import (BrResult, MetaGameEstimator, best_response_ce, best_response_cce,
                     best_response_to_weights, estimate_meta_game, expected_return,
                     opponent_weights)
from .policy import JointPolicyPool, TabularPolicy, dump_policy, load_policy

__all__ = [
    "CHANCE", "TERMINAL", "GameTree", "State", "BUILTIN_TREES", "SheriffConfig",
    "kuhn_poker", "normal_form_as_tree", "sheriff", "trade_comm", "BrResult",
    "MetaGameEstimator", "best_response_ce", "best_response_cce", "best_response_to_weights",
    "estimate_meta_game", "expected_return", "opponent_weights", "JointPolicyPool",
    "TabularPolicy", "dump_policy", "load_policy",
]
