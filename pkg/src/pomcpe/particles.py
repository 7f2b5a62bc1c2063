"""Unweighted particle filters with constant-time entropy maintenance."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

import numba
import numpy as np

from .core import HOT_JIT, PomdpModel, sample_cumulative

# the cached entropy is recomputed from scratch after this many insertions
REFRESH_INTERVAL = 1 << 16
REJECTION_FACTOR = 100


class EmptyFilter(LookupError):
    """The filter holds no particles."""


class InconsistentObservation(ValueError):
    """No state can produce the observation: the filter cannot be rebuilt."""


@numba.njit(**HOT_JIT)
def entropy_after_insert(h, n, c):
    """Entropy of a count vector of total ``n`` after adding one particle to a bucket holding ``c``.

    ``h`` is the entropy before the insertion.  The ``c * (log(c + 1) - log(c))``
    and ``n * log(n)`` terms are taken as 0 when ``c`` or ``n`` is 0.
    """
    n1 = n + 1
    growth = c * (math.log(c + 1) - math.log(c)) if c > 0 else 0.0
    nlogn = n * math.log(n) if n > 0 else 0.0
    return (-1.0 / n1) * (growth + math.log(c + 1) + nlogn - n1 * math.log(n1)) + h * n / n1


@numba.njit(**HOT_JIT)
def counts_entropy(counts):
    """Entropy of a count vector, summed in index order; 0 for an empty vector."""
    n = 0
    for c in counts:
        n += c
    total = 0.0
    if n == 0:
        return total
    for c in counts:
        if c > 0:
            p = c / n
            total -= p * math.log(p)
    return total


class ParticleFilter:
    """A multiset of states stored as per-state counts, with cached entropy in nats."""

    __slots__ = ("counts", "n", "entropy", "_since_refresh")

    def __init__(self, counts: Mapping[int, int] | None = None):
        self.counts: dict[int, int] = {}
        self.n = 0
        self.entropy = 0.0
        self._since_refresh = 0
        if counts:
            for s in sorted(counts):
                if counts[s] < 0:
                    raise ValueError("particle counts must be nonnegative")
                if counts[s]:
                    self.counts[s] = int(counts[s])
            self.n = sum(self.counts.values())
            self.entropy = self.full_entropy() if self.n else 0.0

    @classmethod
    def from_states(cls, states: Iterable[int]) -> "ParticleFilter":
        f = cls()
        for s in states:
            f.counts[s] = f.counts.get(s, 0) + 1
            f.n += 1
        f.entropy = f.full_entropy() if f.n else 0.0
        return f

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"ParticleFilter(n={self.n}, distinct={len(self.counts)}, entropy={self.entropy:.4f})"

    def add_particle(self, s: int) -> None:
        c = self.counts.get(s, 0)
        self.entropy = entropy_after_insert(self.entropy, self.n, c)
        self.counts[s] = c + 1
        self.n += 1
        self._since_refresh += 1
        if self._since_refresh >= REFRESH_INTERVAL:
            self.entropy = self.full_entropy()
            self._since_refresh = 0

    def full_entropy(self) -> float:
        if self.n == 0:
            raise EmptyFilter("entropy of an empty filter")
        return counts_entropy(np.array([self.counts[s] for s in sorted(self.counts)], dtype=np.int64))

    def refresh(self) -> None:
        self.entropy = self.full_entropy() if self.n else 0.0
        self._since_refresh = 0

    def sample(self, rng: np.random.Generator) -> int:
        """Draw a state with probability ``count / n``; states are scanned in index order."""
        if self.n == 0:
            raise EmptyFilter("cannot sample from an empty filter")
        target = int(rng.random() * self.n)
        acc = 0
        last = -1
        for s in sorted(self.counts):
            acc += self.counts[s]
            last = s
            if target < acc:
                return s
        return last

    def probabilities(self, num_states: int) -> np.ndarray:
        p = np.zeros(num_states)
        for s, c in self.counts.items():
            p[s] = c / self.n
        return p

    def copy(self) -> "ParticleFilter":
        f = ParticleFilter()
        f.counts = dict(self.counts)
        f.n = self.n
        f.entropy = self.entropy
        f._since_refresh = self._since_refresh
        return f


def add_particle(f: ParticleFilter, s: int) -> ParticleFilter:
    f.add_particle(s)
    return f


def filter_entropy_full(f: ParticleFilter) -> float:
    return f.full_entropy()


def sample_particle(f: ParticleFilter, rng: np.random.Generator) -> int:
    return f.sample(rng)


def sample_initial_filter(m: PomdpModel, size: int, rng: np.random.Generator) -> ParticleFilter:
    cum = m.tables.initial_cum
    return ParticleFilter.from_states(
        int(sample_cumulative(cum, 0, m.num_states, rng)) for _ in range(size)
    )


def consistent_states(m: PomdpModel, a: int, z: int) -> list[int]:
    """Non-terminal states that can emit ``z`` after action ``a``."""
    return [s for s in range(m.num_states) if m.observation[a, s, z] > 0.0 and not m.terminal[s]]


def reinvigorate(
    f: ParticleFilter,
    parent: ParticleFilter | None,
    m: PomdpModel,
    a: int,
    z: int,
    target: int,
    rng: np.random.Generator,
) -> ParticleFilter:
    """Top ``f`` up to ``target`` particles consistent with having done ``a`` and seen ``z``.

    Predecessors come from ``parent`` (or the initial distribution when it is
    empty) and are pushed through the generative model; successors are kept when
    they reproduce ``z`` without ending the episode.  After
    ``REJECTION_FACTOR * target`` attempts the remainder is drawn uniformly from
    the states that can emit ``z``.
    """
    if target < 1:
        raise ValueError("target must be at least 1")
    if f.n >= target:
        return f
    attempts = 0
    budget = REJECTION_FACTOR * target
    added = False
    while f.n < target and attempts < budget:
        attempts += 1
        if parent is not None and parent.n:
            s = parent.sample(rng)
        else:
            s = m.sample_initial(rng)
        step = m.step(s, a, rng)
        if step.observation == z and not step.done:
            f.counts[step.next_state] = f.counts.get(step.next_state, 0) + 1
            f.n += 1
            added = True
    if f.n < target:
        candidates = consistent_states(m, a, z)
        if not candidates:
            raise InconsistentObservation(f"no state can emit observation {z} after action {a}")
        while f.n < target:
            s = candidates[int(rng.random() * len(candidates))]
            f.counts[s] = f.counts.get(s, 0) + 1
            f.n += 1
            added = True
    if added:
        f.refresh()
    return f
