"""Policy-tree nodes, planner configuration and the action-selection rules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional

import numba

from ..core import HOT_JIT, PomdpModel
from ..particles import ParticleFilter

INFINITE_THRESHOLD = 2**62


@dataclass(frozen=True)
class PlannerConfig:
    """Hyperparameters shared by POMCP and POMCPe.

    ``simulations`` bounds each search by simulation count; when ``time_ms`` is
    set it takes precedence and the search runs until the wall-clock budget is
    spent.  ``gamma=None`` uses the model's discount.  ``k_threshold`` may be
    ``math.inf`` to disable entropy back-propagation.  ``final_selection``
    picks the executed root action: ``"value"`` (highest Q among visited
    actions) or ``"visits"`` (most simulated action).
    """

    exploration_c: float = 50.0
    entropy_e: float = 500.0
    gamma: Optional[float] = None
    epsilon: float = 0.01
    k_threshold: float = 10
    simulations: Optional[int] = 10_000
    time_ms: Optional[float] = None
    initial_particles: int = 1000
    entropy_combine: str = "sum"
    final_selection: str = "value"
    seed: int = 0

    def __post_init__(self):
        if self.exploration_c < 0 or self.entropy_e < 0:
            raise ValueError("exploration_c and entropy_e must be nonnegative")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_threshold < 0:
            raise ValueError("k_threshold must be nonnegative")
        if self.entropy_combine not in ("sum", "max"):
            raise ValueError("entropy_combine must be 'sum' or 'max'")
        if self.final_selection not in ("value", "visits"):
            raise ValueError("final_selection must be 'value' or 'visits'")
        if self.simulations is None and self.time_ms is None:
            raise ValueError("a simulation or time budget is required")
        if self.simulations is not None and self.simulations < 0:
            raise ValueError("simulations must be nonnegative")
        if self.initial_particles < 0:
            raise ValueError("initial_particles must be nonnegative")

    def discount(self, m: PomdpModel) -> float:
        return m.discount if self.gamma is None else self.gamma

    def k_threshold_int(self) -> int:
        return INFINITE_THRESHOLD if math.isinf(self.k_threshold) else int(self.k_threshold)

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["k_threshold"]):
            d["k_threshold"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        d = dict(d)
        if d.get("k_threshold") in ("inf", "infinity", None):
            d["k_threshold"] = math.inf
        return cls(**d)


@lru_cache(maxsize=64)
def cutoff_depth(gamma: float, epsilon: float) -> int:
    """Smallest depth ``d`` with ``gamma ** d < epsilon``."""
    d = 0
    while gamma**d >= epsilon:
        d += 1
    return d


class ActionNode:
    """Statistics for taking one action under a belief node."""

    __slots__ = (
        "action",
        "parent",
        "visit_count",
        "q_value",
        "max_entropy_reduction",
        "particle_throughput",
        "children",
    )

    def __init__(self, action: int, parent: "BeliefNode"):
        self.action = action
        self.parent = parent
        self.visit_count = 0
        self.q_value = 0.0
        self.max_entropy_reduction = 0.0
        self.particle_throughput = 0
        self.children: dict[int, BeliefNode] = {}

    def __repr__(self):
        return (
            f"ActionNode(a={self.action}, N={self.visit_count}, V={self.q_value:.3f}, "
            f"dH*={self.max_entropy_reduction:.3f}, obs={len(self.children)})"
        )

    def child(self, z: int) -> "BeliefNode":
        node = self.children.get(z)
        if node is None:
            node = BeliefNode(parent=self)
            self.children[z] = node
        return node


class BeliefNode:
    """A belief estimate (particle filter) reached by an action-observation history."""

    __slots__ = ("filter", "visit_count", "children", "parent")

    def __init__(self, filter: ParticleFilter | None = None, parent: ActionNode | None = None):
        self.filter = filter if filter is not None else ParticleFilter()
        self.visit_count = 0
        self.children: list[ActionNode] | None = None
        self.parent = parent

    def __repr__(self):
        kids = "leaf" if self.children is None else f"{len(self.children)} actions"
        return f"BeliefNode(N={self.visit_count}, {self.filter!r}, {kids})"

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def depth(self) -> int:
        d = 0
        node = self
        while node.parent is not None:
            node = node.parent.parent
            d += 1
        return d

    def expand(self, num_actions: int) -> None:
        self.children = [ActionNode(a, self) for a in range(num_actions)]

    def record(self, s: int) -> None:
        """A trajectory carrying state ``s`` passed through this node."""
        self.filter.add_particle(s)
        self.visit_count += 1
        if self.parent is not None:
            self.parent.particle_throughput += 1


# --- scoring kernels, shared with the compiled engine --------------------------

@numba.njit(**HOT_JIT)
def ucb_score(q, n_b, n_ba, c):
    return q + c * math.sqrt(math.log(n_b) / n_ba)


@numba.njit(**HOT_JIT)
def entropy_denominator(n_ba):
    # sqrt(log N) vanishes at N = 1; shift the first two counts by one
    if n_ba <= 2:
        return math.sqrt(math.log(n_ba + 1.0))
    return math.sqrt(math.log(n_ba))


@numba.njit(**HOT_JIT)
def entropy_bonus(dh, n_ba, e):
    return e * (dh / entropy_denominator(n_ba))


def ucb1_select(node: BeliefNode, c: float) -> int:
    """``argmax_a Q(b, a) + c sqrt(log N(b) / N(b, a))``; unvisited actions first."""
    best, best_score = -1, -math.inf
    for a, child in enumerate(node.children):
        if child.visit_count == 0:
            return a
        score = ucb_score(child.q_value, node.visit_count, child.visit_count, c)
        if score > best_score:
            best, best_score = a, score
    return best


def back_propagate_entropy(a: ActionNode, dh: float) -> None:
    """Raise the stored maximum reduction of ``a`` and every ancestor action node to ``dh``."""
    node: ActionNode | None = a
    while node is not None:
        if dh > node.max_entropy_reduction:
            node.max_entropy_reduction = dh
        node = node.parent.parent


def entropy_term(a: ActionNode, k_threshold: float = 10, combine: str = "sum") -> float:
    """Immediate entropy reduction under ``a`` combined with the best reduction found below it."""
    n = a.particle_throughput
    if not a.children or n == 0:
        return 0.0
    h = 0.0
    for child in a.children.values():
        h += (child.filter.n / n) * child.filter.entropy
    dh = a.parent.filter.entropy - h
    if n >= k_threshold:
        back_propagate_entropy(a, dh)
    if combine == "sum":
        return dh + a.max_entropy_reduction
    return max(dh, a.max_entropy_reduction)


def pomcpe_select(node: BeliefNode, c: float, e: float, k_threshold: float = 10, combine: str = "sum") -> int:
    """UCB1 plus ``e * dH / sqrt(log N(b, a))``; unvisited actions first."""
    for a, child in enumerate(node.children):
        if child.visit_count == 0:
            return a
    best, best_score = -1, -math.inf
    for a, child in enumerate(node.children):
        dh = entropy_term(child, k_threshold, combine)
        score = ucb_score(child.q_value, node.visit_count, child.visit_count, c)
        score += entropy_bonus(dh, child.visit_count, e)
        if score > best_score:
            best, best_score = a, score
    return best
