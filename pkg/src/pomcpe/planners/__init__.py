from .planner import POMCP, Planner, POMCPe
from .reference import SearchResult, ZeroBudgetWarning, advance_root, rollout, search, simulate
from .tree import (
    ActionNode,
    BeliefNode,
    PlannerConfig,
    back_propagate_entropy,
    cutoff_depth,
    entropy_term,
    pomcpe_select,
    ucb1_select,
)

__all__ = [
    "ActionNode",
    "BeliefNode",
    "Planner",
    "PlannerConfig",
    "POMCP",
    "POMCPe",
    "SearchResult",
    "ZeroBudgetWarning",
    "advance_root",
    "back_propagate_entropy",
    "cutoff_depth",
    "entropy_term",
    "pomcpe_select",
    "rollout",
    "search",
    "simulate",
    "ucb1_select",
]
