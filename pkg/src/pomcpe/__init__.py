"""Online POMDP planning with POMCP and the entropy-guided POMCPe variant."""

from .core import (
    BudgetExceeded,
    ImpossibleObservation,
    PomdpModel,
    Step,
    discounted_return,
    exact_belief_update,
    exact_entropy,
    expectimax_q,
    expected_reward,
    generative_step,
    greedy_action,
    value_of_information,
)
from .particles import EmptyFilter, InconsistentObservation, ParticleFilter, reinvigorate
from .planners import POMCP, Planner, PlannerConfig, POMCPe, SearchResult

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "EmptyFilter",
    "ImpossibleObservation",
    "InconsistentObservation",
    "ParticleFilter",
    "Planner",
    "PlannerConfig",
    "POMCP",
    "POMCPe",
    "PomdpModel",
    "SearchResult",
    "Step",
    "discounted_return",
    "exact_belief_update",
    "exact_entropy",
    "expectimax_q",
    "expected_reward",
    "generative_step",
    "greedy_action",
    "reinvigorate",
    "value_of_information",
]
