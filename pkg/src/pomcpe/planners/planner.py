"""A stateful planner that owns its search tree across the steps of an episode."""

from __future__ import annotations

import time
import warnings

import numpy as np

from ..core import PomdpModel
from ..particles import ParticleFilter, reinvigorate, sample_initial_filter
from . import engine, reference
from .reference import SearchResult, ZeroBudgetWarning, choose
from .tree import BeliefNode, PlannerConfig, cutoff_depth

VARIANTS = ("pomcp", "pomcpe")
BACKENDS = ("compiled", "reference")
# simulations per compiled call when running against a wall-clock budget
TIME_CHUNK = 256


class Planner:
    """POMCP (``variant="pomcp"``) or POMCPe (``variant="pomcpe"``).

    ``backend="compiled"`` runs the numba engine; ``backend="reference"`` runs
    the object tree.  Both consume the generator identically.
    """

    def __init__(self, model: PomdpModel, cfg: PlannerConfig, variant: str = "pomcpe", backend: str = "compiled"):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        self.model = model
        self.cfg = cfg
        self.variant = variant
        self.backend = backend
        gamma = cfg.discount(model)
        self.params = engine.EngineParams(
            c=float(cfg.exploration_c),
            e=float(cfg.entropy_e),
            gamma=float(gamma),
            cutoff=cutoff_depth(gamma, cfg.epsilon),
            k_threshold=cfg.k_threshold_int(),
            use_entropy=variant == "pomcpe",
            combine_sum=cfg.entropy_combine == "sum",
        )
        self.root: BeliefNode | None = None
        self.tree: engine.ArrayTree | None = None

    @property
    def uses_entropy(self) -> bool:
        return self.variant == "pomcpe"

    def reset(self, rng: np.random.Generator, belief: ParticleFilter | None = None) -> None:
        """Start a new tree whose root holds ``belief`` (default: sampled from the initial distribution)."""
        if belief is None:
            f = sample_initial_filter(self.model, self.cfg.initial_particles, rng)
        else:
            f = belief.copy()
        if self.backend == "reference":
            self.root = BeliefNode(f)
        else:
            spare = self._spare()
            self.tree = engine.allocate(self.model.num_states, spare + 1, (spare + 1) * self.model.num_actions)
            engine._new_belief(self.tree, -1, -1)
            engine.store_filter(self.tree, 0, f)

    def _spare(self) -> int:
        sims = self.cfg.simulations if self.cfg.time_ms is None else 4096
        return max(int(sims), 1)

    def _ensure(self, sims: int) -> None:
        used_b, used_a = self.tree.size
        cap_b, cap_a = engine.capacity(self.tree)
        need_b = used_b + sims
        need_a = used_a + sims * self.model.num_actions
        if need_b > cap_b or need_a > cap_a:
            self.tree = engine.grow(self.tree, max(need_b, 2 * cap_b), max(need_a, 2 * cap_a))

    def search(self, rng: np.random.Generator) -> SearchResult:
        if self.backend == "reference":
            if self.root is None:
                raise RuntimeError("call reset() before search()")
            return reference.search(self.root, self.model, self.cfg, rng, entropy=self.uses_entropy)
        if self.tree is None:
            raise RuntimeError("call reset() before search()")
        cfg = self.cfg
        start = time.perf_counter()
        sims = 0
        if cfg.time_ms is None:
            if cfg.simulations:
                self._ensure(cfg.simulations)
                engine.run_simulations(self.tree, self.model.tables, self.params, cfg.simulations, rng)
                sims = cfg.simulations
        else:
            deadline = start + cfg.time_ms / 1000.0
            while time.perf_counter() < deadline:
                self._ensure(TIME_CHUNK)
                engine.run_simulations(self.tree, self.model.tables, self.params, TIME_CHUNK, rng)
                sims += TIME_CHUNK
        return self._result(sims, time.perf_counter() - start)

    plan = search

    def _result(self, sims: int, elapsed: float) -> SearchResult:
        A = self.model.num_actions
        first = int(self.tree.b_first_action[0])
        if first < 0:
            q, n = (0.0,) * A, (0,) * A
        else:
            q = tuple(float(v) for v in self.tree.a_value[first:first + A])
            n = tuple(int(v) for v in self.tree.a_visits[first:first + A])
        action, warning = choose(q, n, self.cfg.final_selection)
        if warning:
            warnings.warn(warning, ZeroBudgetWarning, stacklevel=3)
        return SearchResult(action, sims, elapsed, q, n, warning)

    def advance(self, a: int, z: int, rng: np.random.Generator, terminal: bool = False) -> bool:
        """Re-root the tree at the belief reached by executing ``a`` and perceiving ``z``.

        Returns ``False`` (and drops the tree) when the step ended the episode.
        """
        if self.backend == "reference":
            self.root = reference.advance_root(self.root, a, z, self.model, self.cfg, rng, terminal)
            return self.root is not None
        if terminal:
            self.tree = None
            return False
        old = self.tree
        b = engine.child_of_root(old, a, z)
        spare = self._spare()
        A = self.model.num_actions
        if b < 0:
            tree = engine.allocate(self.model.num_states, spare + 1, (spare + 1) * A)
            engine._new_belief(tree, -1, -1)
        else:
            tree = engine.extract_subtree(old, b, A, spare, spare * A)
        target = max(self.cfg.initial_particles, 1)
        if tree.b_n[0] < target:
            f = engine.filter_of(tree, 0)
            reinvigorate(f, engine.filter_of(old, 0), self.model, a, z, target, rng)
            engine.store_filter(tree, 0, f)
        self.tree = tree
        return True

    def root_filter(self) -> ParticleFilter:
        if self.backend == "reference":
            return self.root.filter
        return engine.filter_of(self.tree, 0)


class POMCP(Planner):
    def __init__(self, model: PomdpModel, cfg: PlannerConfig, backend: str = "compiled"):
        super().__init__(model, cfg, "pomcp", backend)


class POMCPe(Planner):
    def __init__(self, model: PomdpModel, cfg: PlannerConfig, backend: str = "compiled"):
        super().__init__(model, cfg, "pomcpe", backend)
