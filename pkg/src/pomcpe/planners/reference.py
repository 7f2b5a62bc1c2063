"""Object-tree POMCP / POMCPe.

This is the readable implementation: one Python object per node, recursion in
``simulate``.  The compiled engine in :mod:`pomcpe.planners.engine` follows it
draw for draw, and the test suite checks the two against each other.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from ..core import PomdpModel
from ..particles import ParticleFilter, reinvigorate, sample_initial_filter
from .tree import BeliefNode, PlannerConfig, cutoff_depth, pomcpe_select, ucb1_select


@dataclass(frozen=True)
class SearchResult:
    action: int
    simulations: int
    elapsed: float
    q_values: tuple[float, ...]
    visit_counts: tuple[int, ...]
    warning: str | None = None


class ZeroBudgetWarning(RuntimeWarning):
    pass


def initial_root(m: PomdpModel, cfg: PlannerConfig, rng: np.random.Generator) -> BeliefNode:
    return BeliefNode(sample_initial_filter(m, cfg.initial_particles, rng))


def rollout(s: int, depth: int, m: PomdpModel, cfg: PlannerConfig, rng: np.random.Generator) -> float:
    """Discounted return of uniformly random actions from ``s`` until termination or the depth cutoff."""
    gamma = cfg.discount(m)
    limit = cutoff_depth(gamma, cfg.epsilon)
    rewards = []
    while depth < limit and not m.terminal[s]:
        a = int(rng.random() * m.num_actions)
        step = m.step(s, a, rng)
        rewards.append(step.reward)
        if step.done:
            break
        s = step.next_state
        depth += 1
    value = 0.0
    for r in reversed(rewards):
        value = r + gamma * value
    return value


def simulate(
    s: int,
    node: BeliefNode,
    depth: int,
    m: PomdpModel,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    entropy: bool = False,
    terminal: bool = False,
) -> float:
    """One trajectory from ``node`` carrying state ``s``; returns its discounted return.

    ``terminal`` marks that the transition into ``node`` ended the episode.
    """
    gamma = cfg.discount(m)
    if depth >= cutoff_depth(gamma, cfg.epsilon):
        return 0.0
    if terminal:
        node.record(s)
        return 0.0
    if node.is_leaf:
        node.expand(m.num_actions)
        node.record(s)
        return rollout(s, depth, m, cfg, rng)

    if entropy:
        a = pomcpe_select(
            node, cfg.exploration_c, cfg.entropy_e, cfg.k_threshold, cfg.entropy_combine
        )
    else:
        a = ucb1_select(node, cfg.exploration_c)
    step = m.step(s, a, rng)
    action = node.children[a]
    child = action.child(step.observation)
    R = step.reward + gamma * simulate(
        step.next_state, child, depth + 1, m, cfg, rng, entropy, step.done
    )
    node.record(s)
    action.visit_count += 1
    action.q_value += (R - action.q_value) / action.visit_count
    return R


NO_SIMULATION_WARNING = "no root action was simulated; returning action 0"


def choose(q_values, visit_counts, rule: str = "value") -> tuple[int, str | None]:
    """Executed action from root statistics; ties go to the lowest index.

    ``"value"`` takes the highest Q among visited actions (no exploration or
    entropy bonus), ``"visits"`` the most simulated action.
    """
    if not any(visit_counts):
        return 0, NO_SIMULATION_WARNING
    best, best_key = 0, None
    for a, (q, n) in enumerate(zip(q_values, visit_counts)):
        if not n:
            continue
        key = q if rule == "value" else n
        if best_key is None or key > best_key:
            best, best_key = a, key
    return best, None


def best_action(root: BeliefNode, rule: str = "value") -> tuple[int, str | None]:
    if root.is_leaf:
        return 0, NO_SIMULATION_WARNING
    return choose([a.q_value for a in root.children], [a.visit_count for a in root.children], rule)


def search(
    root: BeliefNode,
    m: PomdpModel,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    entropy: bool = False,
) -> SearchResult:
    start = time.perf_counter()
    deadline = None if cfg.time_ms is None else start + cfg.time_ms / 1000.0
    sims = 0
    while True:
        if deadline is not None:
            if time.perf_counter() >= deadline:
                break
        elif sims >= cfg.simulations:
            break
        s = root.filter.sample(rng) if root.filter.n else m.sample_initial(rng)
        simulate(s, root, 0, m, cfg, rng, entropy)
        sims += 1
    if root.is_leaf:
        q, n = (0.0,) * m.num_actions, (0,) * m.num_actions
    else:
        q = tuple(a.q_value for a in root.children)
        n = tuple(a.visit_count for a in root.children)
    action, warning = choose(q, n, cfg.final_selection)
    if warning:
        warnings.warn(warning, ZeroBudgetWarning, stacklevel=2)
    return SearchResult(action, sims, time.perf_counter() - start, q, n, warning)


def advance_root(
    tree: BeliefNode,
    a: int,
    z: int,
    m: PomdpModel,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    terminal: bool = False,
) -> BeliefNode | None:
    """Make the belief reached by ``(a, z)`` the new root, keeping its subtree.

    Returns ``None`` when the executed step ended the episode.  A missing child
    is created; a child holding fewer than ``cfg.initial_particles`` particles
    is topped up by reinvigoration from the old root's filter.
    """
    if terminal:
        return None
    child = None
    if not tree.is_leaf:
        child = tree.children[a].children.get(z)
    if child is None:
        child = BeliefNode(ParticleFilter())
    child.parent = None
    target = max(cfg.initial_particles, 1)
    if child.filter.n < target:
        reinvigorate(child.filter, tree.filter, m, a, z, target, rng)
    return child
