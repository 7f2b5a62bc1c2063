"""Finite POMDP models, exact belief inference and a small-domain expectimax oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import numba

ROW_TOLERANCE = 1e-9
DEFAULT_NODE_CAP = 1_000_000


class ImpossibleObservation(ValueError):
    """Raised when an observation has zero probability under the current belief."""


class BudgetExceeded(RuntimeError):
    """Raised when the expectimax oracle enumerates more belief nodes than allowed."""


class Step(NamedTuple):
    next_state: int
    observation: int
    reward: float
    done: bool


class SamplerTables(NamedTuple):
    """Sparse cumulative tables used by the compiled generative model.

    Successors of ``(s, a)`` live at ``succ_state[succ_ptr[s * A + a]:succ_ptr[s * A + a + 1]]``
    and observations of ``(a, s')`` at ``obs_id[obs_ptr[a * S + s']:...]``.
    """

    num_states: int
    num_actions: int
    num_observations: int
    succ_ptr: np.ndarray
    succ_state: np.ndarray
    succ_cum: np.ndarray
    obs_ptr: np.ndarray
    obs_id: np.ndarray
    obs_cum: np.ndarray
    reward: np.ndarray
    ends: np.ndarray
    terminal: np.ndarray
    initial_cum: np.ndarray


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """A finite POMDP ``(S, A, Z, T, O, R, gamma)`` with an initial distribution.

    ``transition[s, a, s']`` is ``Pr(s' | s, a)``, ``observation[a, s', z]`` is
    ``Pr(z | a, s')`` and ``reward[s, a]`` the immediate reward.  An episode ends
    after ``(s, a, s')`` when ``s'`` is a terminal state or when ``ends[s, a]``
    is set (actions such as opening a door in Tiger).
    """

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    initial: np.ndarray
    terminal: np.ndarray | None = None
    ends: np.ndarray | None = None
    state_names: tuple[str, ...] = ()
    action_names: tuple[str, ...] = ()
    observation_names: tuple[str, ...] = ()
    name: str = "pomdp"
    tables: SamplerTables = field(init=False, repr=False)

    def __post_init__(self) -> None:
        T = np.array(self.transition, dtype=np.float64)
        O = np.array(self.observation, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        init = np.array(self.initial, dtype=np.float64)
        S, A, S2 = T.shape
        if S2 != S or O.shape[:2] != (A, S) or R.shape != (S, A) or init.shape != (S,):
            raise ValueError("inconsistent POMDP array shapes")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if (T < 0).any() or np.abs(T.sum(axis=2) - 1.0).max() > ROW_TOLERANCE:
            raise ValueError("transition rows must be distributions")
        if (O < 0).any() or np.abs(O.sum(axis=2) - 1.0).max() > ROW_TOLERANCE:
            raise ValueError("observation rows must be distributions")
        if (init < 0).any() or abs(init.sum() - 1.0) > ROW_TOLERANCE:
            raise ValueError("initial distribution must sum to 1")
        terminal = np.zeros(S, dtype=np.bool_) if self.terminal is None else np.array(self.terminal, dtype=np.bool_)
        ends = np.zeros((S, A), dtype=np.bool_) if self.ends is None else np.array(self.ends, dtype=np.bool_)
        arrays = {"transition": T, "observation": O, "reward": R, "initial": init, "terminal": terminal, "ends": ends}
        for key, value in arrays.items():
            value.flags.writeable = False
            object.__setattr__(self, key, value)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "tables", _build_tables(T, O, R, ends, terminal, init))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_observations(self) -> int:
        return self.observation.shape[2]

    def is_terminal(self, s: int) -> bool:
        return bool(self.terminal[s])

    def step(self, s: int, a: int, rng: np.random.Generator) -> Step:
        """Sample ``(s', z, r, done)`` from the generative model."""
        s2, z, r, done = sample_step(self.tables, s, a, rng)
        return Step(int(s2), int(z), float(r), bool(done))

    def sample_initial(self, rng: np.random.Generator) -> int:
        return int(sample_cumulative(self.tables.initial_cum, 0, self.num_states, rng))

    def action_index(self, name: str) -> int:
        return self.action_names.index(name)

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    def observation_index(self, name: str) -> int:
        return self.observation_names.index(name)


def generative_step(m: PomdpModel, s: int, a: int, rng: np.random.Generator) -> Step:
    return m.step(s, a, rng)


def _build_tables(T, O, R, ends, terminal, init) -> SamplerTables:
    S, A, _ = T.shape
    Z = O.shape[2]

    def sparse(rows):
        ptr = [0]
        ids: list[int] = []
        cum: list[float] = []
        for row in rows:
            support = np.flatnonzero(row > 0.0)
            c = np.cumsum(row[support])
            if len(c):
                c[-1] = 1.0
            ids.extend(support.tolist())
            cum.extend(c.tolist())
            ptr.append(len(ids))
        return np.array(ptr, dtype=np.int64), np.array(ids, dtype=np.int64), np.array(cum, dtype=np.float64)

    succ_ptr, succ_state, succ_cum = sparse(T.reshape(S * A, S))
    obs_ptr, obs_id, obs_cum = sparse(O.reshape(A * S, Z))
    init_cum = np.cumsum(init)
    init_cum[-1] = 1.0
    return SamplerTables(
        S, A, Z, succ_ptr, succ_state, succ_cum, obs_ptr, obs_id, obs_cum,
        R.copy(), ends.copy(), terminal.copy(), init_cum,
    )


# Helpers on the hot path never allocate, so they are compiled without the
# reference-counting runtime; with it every call pays for increfs on each array.
HOT_JIT = {"cache": True, "_nrt": False}


@numba.njit(**HOT_JIT)
def sample_cumulative(cum, lo, hi, rng):
    """Index ``i`` in ``[lo, hi)`` with ``cum[i-1] <= u < cum[i]``; no draw for a single entry."""
    if hi - lo == 1:
        return lo
    u = rng.random()
    for i in range(lo, hi - 1):
        if u < cum[i]:
            return i
    return hi - 1


@numba.njit(**HOT_JIT)
def sample_step(tables, s, a, rng):
    A = tables.num_actions
    S = tables.num_states
    row = s * A + a
    i = sample_cumulative(tables.succ_cum, tables.succ_ptr[row], tables.succ_ptr[row + 1], rng)
    s2 = tables.succ_state[i]
    orow = a * S + s2
    j = sample_cumulative(tables.obs_cum, tables.obs_ptr[orow], tables.obs_ptr[orow + 1], rng)
    z = tables.obs_id[j]
    done = tables.ends[s, a] or tables.terminal[s2]
    return s2, z, tables.reward[s, a], done


# --- exact belief math -------------------------------------------------------

DenseBelief = np.ndarray


def check_belief(b: Sequence[float], num_states: int | None = None) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or (num_states is not None and b.shape[0] != num_states):
        raise ValueError(f"belief must be a vector over {num_states} states")
    if (b < 0).any() or abs(b.sum() - 1.0) > ROW_TOLERANCE:
        raise ValueError("belief entries must be nonnegative and sum to 1")
    return b


def predict(b: np.ndarray, a: int, m: PomdpModel) -> np.ndarray:
    """One-step predicted state distribution ``sum_s T(s, a, .) b(s)``."""
    return check_belief(b, m.num_states) @ m.transition[:, a, :]


def observation_probability(b: np.ndarray, a: int, z: int, m: PomdpModel) -> float:
    return float(m.observation[a, :, z] @ predict(b, a, m))


def exact_belief_update(b: np.ndarray, a: int, z: int, m: PomdpModel) -> np.ndarray:
    """Bayes filter: ``b'(s') = eta * O(z | s', a) * sum_s T(s' | s, a) b(s)``."""
    unnormalized = m.observation[a, :, z] * predict(b, a, m)
    total = unnormalized.sum()
    if total <= 0.0:
        raise ImpossibleObservation(f"observation {z} has zero probability after action {a}")
    return unnormalized / total


def expected_reward(b: np.ndarray, a: int, m: PomdpModel) -> float:
    return float(check_belief(b, m.num_states) @ m.reward[:, a])


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


def exact_entropy(b: np.ndarray) -> float:
    """Shannon entropy in nats, with ``0 * log 0 = 0``."""
    p = np.asarray(b, dtype=np.float64)
    p = p[p > 0.0]
    return float(-(p * np.log(p)).sum())


# --- expectimax oracle -------------------------------------------------------

class _Expectimax:
    def __init__(self, m: PomdpModel, node_cap: int):
        self.m = m
        self.node_cap = node_cap
        self.nodes = 0
        S, A = m.num_states, m.num_actions
        cont = 1.0 - np.logical_or(m.ends[:, :, None], m.terminal[None, None, :])
        # mass that keeps the episode alive: T(s, a, s') * [(s, a, s') does not end it]
        self.alive = m.transition * cont
        assert self.alive.shape == (S, A, S)

    def q(self, b: np.ndarray, a: int, horizon: int) -> float:
        m = self.m
        value = float(b @ m.reward[:, a])
        if horizon <= 1:
            return value
        mass = b @ self.alive[:, a, :]
        future = 0.0
        for z in range(m.num_observations):
            joint = m.observation[a, :, z] * mass
            p = joint.sum()
            if p <= 0.0:
                continue
            future += p * self.v(joint / p, horizon - 1)
        return value + m.discount * future

    def v(self, b: np.ndarray, horizon: int) -> float:
        self.nodes += 1
        if self.nodes > self.node_cap:
            raise BudgetExceeded(f"expectimax enumerated more than {self.node_cap} belief nodes")
        return max(self.q(b, a, horizon) for a in range(self.m.num_actions))


def expectimax_q(b: np.ndarray, a: int, horizon: int, m: PomdpModel, node_cap: int = DEFAULT_NODE_CAP) -> float:
    """Exact finite-horizon ``Q(b, a)``; horizon 0 and 1 both reduce to the immediate expected reward.

    Probability mass whose transition ends the episode contributes no future value.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    b = check_belief(b, m.num_states)
    return _Expectimax(m, node_cap).q(b, a, horizon)


def q_values(b: np.ndarray, horizon: int, m: PomdpModel, node_cap: int = DEFAULT_NODE_CAP) -> np.ndarray:
    b = check_belief(b, m.num_states)
    oracle = _Expectimax(m, node_cap)
    return np.array([oracle.q(b, a, horizon) for a in range(m.num_actions)])


def greedy_action(b: np.ndarray, horizon: int, m: PomdpModel, node_cap: int = DEFAULT_NODE_CAP) -> int:
    # np.argmax returns the first maximum: ties go to the lowest action index
    return int(np.argmax(q_values(b, horizon, m, node_cap)))


def value_of_information(b: np.ndarray, a: int, horizon: int, m: PomdpModel, node_cap: int = DEFAULT_NODE_CAP) -> float:
    """``Q(b, a)`` minus the best ``Q`` among the other actions."""
    if m.num_actions < 2:
        raise ValueError("value of information needs at least two actions")
    q = q_values(b, horizon, m, node_cap)
    return float(q[a] - np.delete(q, a).max())

