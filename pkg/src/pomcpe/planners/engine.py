"""Compiled POMCP / POMCPe over a struct-of-arrays policy tree.

The tree lives in flat numpy arrays so the whole simulation loop can run under
numba.  Belief nodes and action nodes are addressed by integer index; the root
is always belief node 0.  The actions of belief node ``b`` occupy the contiguous
block ``b_first_action[b] .. b_first_action[b] + A``; the belief children of an
action node form a singly linked list in creation order, which is also the
order the object-tree implementation iterates its child dictionaries in.

Every random draw, floating point operation and tie-break follows
:mod:`pomcpe.planners.reference`, so under the same generator state the two
produce identical trees.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

from ..core import HOT_JIT, sample_cumulative, sample_step
from ..particles import REFRESH_INTERVAL, ParticleFilter, entropy_after_insert
from .tree import entropy_bonus, ucb_score


class ArrayTree(NamedTuple):
    # belief nodes
    counts: np.ndarray  # int32 [cap_b, S]
    b_n: np.ndarray  # int64 particles held
    b_entropy: np.ndarray
    b_since: np.ndarray  # insertions since the last full entropy refresh
    b_visits: np.ndarray
    b_first_action: np.ndarray  # -1 for a leaf
    b_parent: np.ndarray  # parent action node, -1 for the root
    b_obs: np.ndarray  # observation that leads here from the parent
    b_next: np.ndarray  # next sibling under the same action node
    # action nodes
    a_visits: np.ndarray
    a_value: np.ndarray
    a_maxdh: np.ndarray
    a_through: np.ndarray
    a_parent: np.ndarray
    a_first_child: np.ndarray
    a_last_child: np.ndarray
    # [belief nodes used, action nodes used]
    size: np.ndarray


class EngineParams(NamedTuple):
    c: float
    e: float
    gamma: float
    cutoff: int
    k_threshold: int
    use_entropy: bool
    combine_sum: bool


def allocate(num_states: int, cap_b: int, cap_a: int) -> ArrayTree:
    cap_b, cap_a = max(cap_b, 1), max(cap_a, 1)
    return ArrayTree(
        counts=np.zeros((cap_b, num_states), dtype=np.int32),
        b_n=np.zeros(cap_b, dtype=np.int64),
        b_entropy=np.zeros(cap_b),
        b_since=np.zeros(cap_b, dtype=np.int64),
        b_visits=np.zeros(cap_b, dtype=np.int64),
        b_first_action=np.full(cap_b, -1, dtype=np.int64),
        b_parent=np.full(cap_b, -1, dtype=np.int64),
        b_obs=np.full(cap_b, -1, dtype=np.int64),
        b_next=np.full(cap_b, -1, dtype=np.int64),
        a_visits=np.zeros(cap_a, dtype=np.int64),
        a_value=np.zeros(cap_a),
        a_maxdh=np.zeros(cap_a),
        a_through=np.zeros(cap_a, dtype=np.int64),
        a_parent=np.full(cap_a, -1, dtype=np.int64),
        a_first_child=np.full(cap_a, -1, dtype=np.int64),
        a_last_child=np.full(cap_a, -1, dtype=np.int64),
        size=np.zeros(2, dtype=np.int64),
    )


def capacity(tree: ArrayTree) -> tuple[int, int]:
    return tree.b_n.shape[0], tree.a_visits.shape[0]


def grow(tree: ArrayTree, cap_b: int, cap_a: int) -> ArrayTree:
    """Copy ``tree`` into arrays with at least the requested capacities."""
    old_b, old_a = capacity(tree)
    cap_b, cap_a = max(cap_b, old_b), max(cap_a, old_a)
    if (cap_b, cap_a) == (old_b, old_a):
        return tree
    fresh = allocate(tree.counts.shape[1], cap_b, cap_a)
    for name in ArrayTree._fields:
        src, dst = getattr(tree, name), getattr(fresh, name)
        if name == "size":
            dst[:] = src
        elif name.startswith("a_"):
            dst[:old_a] = src
        else:
            dst[:old_b] = src
    return fresh


# --- node primitives ---------------------------------------------------------

@numba.njit(**HOT_JIT)
def _row_entropy(counts, b):
    # counts_entropy on one row, without taking a slice
    n = 0
    for c in counts[b]:
        n += c
    total = 0.0
    if n == 0:
        return total
    for c in counts[b]:
        if c > 0:
            p = c / n
            total -= p * math.log(p)
    return total


@numba.njit(**HOT_JIT)
def _record(t, b, s):
    c = t.counts[b, s]
    t.b_entropy[b] = entropy_after_insert(t.b_entropy[b], t.b_n[b], c)
    t.counts[b, s] = c + 1
    t.b_n[b] += 1
    t.b_since[b] += 1
    if t.b_since[b] >= REFRESH_INTERVAL:
        t.b_entropy[b] = _row_entropy(t.counts, b)
        t.b_since[b] = 0
    t.b_visits[b] += 1
    p = t.b_parent[b]
    if p >= 0:
        t.a_through[p] += 1


@numba.njit(**HOT_JIT)
def _expand(t, b, num_actions):
    first = t.size[1]
    t.size[1] += num_actions
    for i in range(first, first + num_actions):
        t.a_visits[i] = 0
        t.a_value[i] = 0.0
        t.a_maxdh[i] = 0.0
        t.a_through[i] = 0
        t.a_parent[i] = b
        t.a_first_child[i] = -1
        t.a_last_child[i] = -1
    t.b_first_action[b] = first


@numba.njit(**HOT_JIT)
def _new_belief(t, parent, z):
    b = t.size[0]
    t.size[0] += 1
    for s in range(t.counts.shape[1]):
        t.counts[b, s] = 0
    t.b_n[b] = 0
    t.b_entropy[b] = 0.0
    t.b_since[b] = 0
    t.b_visits[b] = 0
    t.b_first_action[b] = -1
    t.b_parent[b] = parent
    t.b_obs[b] = z
    t.b_next[b] = -1
    if parent >= 0:
        if t.a_first_child[parent] < 0:
            t.a_first_child[parent] = b
        else:
            t.b_next[t.a_last_child[parent]] = b
        t.a_last_child[parent] = b
    return b


@numba.njit(**HOT_JIT)
def _child(t, a, z):
    b = t.a_first_child[a]
    while b >= 0:
        if t.b_obs[b] == z:
            return b
        b = t.b_next[b]
    return _new_belief(t, a, z)


# --- selection ---------------------------------------------------------------

@numba.njit(**HOT_JIT)
def _back_propagate(t, a, dh):
    # Ancestors always hold at least the maximum of their descendants, so the
    # walk can stop at the first node that is already high enough.
    while a >= 0:
        if dh > t.a_maxdh[a]:
            t.a_maxdh[a] = dh
        else:
            return
        a = t.b_parent[t.a_parent[a]]


@numba.njit(**HOT_JIT)
def _entropy_term(t, a, k_threshold, combine_sum):
    n = t.a_through[a]
    if t.a_first_child[a] < 0 or n == 0:
        return 0.0
    h = 0.0
    b = t.a_first_child[a]
    while b >= 0:
        h += (t.b_n[b] / n) * t.b_entropy[b]
        b = t.b_next[b]
    dh = t.b_entropy[t.a_parent[a]] - h
    if n >= k_threshold:
        _back_propagate(t, a, dh)
    if combine_sum:
        return dh + t.a_maxdh[a]
    return max(dh, t.a_maxdh[a])


@numba.njit(**HOT_JIT)
def _select(t, b, num_actions, p):
    first = t.b_first_action[b]
    for i in range(num_actions):
        if t.a_visits[first + i] == 0:
            return i
    best = -1
    best_score = -math.inf
    for i in range(num_actions):
        a = first + i
        if p.use_entropy:
            dh = _entropy_term(t, a, p.k_threshold, p.combine_sum)
            score = ucb_score(t.a_value[a], t.b_visits[b], t.a_visits[a], p.c)
            score += entropy_bonus(dh, t.a_visits[a], p.e)
        else:
            score = ucb_score(t.a_value[a], t.b_visits[b], t.a_visits[a], p.c)
        if score > best_score:
            best = i
            best_score = score
    return best


# --- simulation --------------------------------------------------------------

@numba.njit(**HOT_JIT)
def _rollout(tables, s, depth, p, rng, rewards):
    k = 0
    while depth < p.cutoff and not tables.terminal[s]:
        a = int(rng.random() * tables.num_actions)
        s2, z, r, done = sample_step(tables, s, a, rng)
        rewards[k] = r
        k += 1
        if done:
            break
        s = s2
        depth += 1
    value = 0.0
    for i in range(k - 1, -1, -1):
        value = rewards[i] + p.gamma * value
    return value


@numba.njit(**HOT_JIT)
def _sample_root(t, tables, rng):
    n = t.b_n[0]
    if n == 0:
        return sample_cumulative(tables.initial_cum, 0, tables.num_states, rng)
    target = int(rng.random() * n)
    acc = 0
    last = -1
    for s in range(tables.num_states):
        c = t.counts[0, s]
        if c == 0:
            continue
        acc += c
        last = s
        if target < acc:
            return s
    return last


@numba.njit(**HOT_JIT)
def _simulate(t, tables, p, s, rng, path_b, path_a, path_s, path_r, rewards):
    A = tables.num_actions
    node = 0
    depth = 0
    length = 0
    done = False
    value = 0.0
    while True:
        if depth >= p.cutoff:
            break
        if done:
            _record(t, node, s)
            break
        if t.b_first_action[node] < 0:
            _expand(t, node, A)
            _record(t, node, s)
            value = _rollout(tables, s, depth, p, rng, rewards)
            break
        i = _select(t, node, A, p)
        s2, z, r, done = sample_step(tables, s, i, rng)
        a = t.b_first_action[node] + i
        path_b[length] = node
        path_a[length] = a
        path_s[length] = s
        path_r[length] = r
        length += 1
        node = _child(t, a, z)
        s = s2
        depth += 1
    R = value
    for k in range(length - 1, -1, -1):
        R = path_r[k] + p.gamma * R
        _record(t, path_b[k], path_s[k])
        a = path_a[k]
        t.a_visits[a] += 1
        t.a_value[a] += (R - t.a_value[a]) / t.a_visits[a]


@numba.njit(cache=True)
def run_simulations(t, tables, p, count, rng):
    """Run ``count`` simulations from the root; capacity must already suffice."""
    depth = p.cutoff + 1
    path_b = np.empty(depth, dtype=np.int64)
    path_a = np.empty(depth, dtype=np.int64)
    path_s = np.empty(depth, dtype=np.int64)
    path_r = np.empty(depth)
    rewards = np.empty(depth)
    for _ in range(count):
        s = _sample_root(t, tables, rng)
        _simulate(t, tables, p, s, rng, path_b, path_a, path_s, path_r, rewards)


# --- re-rooting --------------------------------------------------------------

@numba.njit(cache=True)
def subtree_size(t, b0, num_actions):
    """(belief nodes, action nodes) in the subtree rooted at belief ``b0``."""
    stack = [b0]
    nb = 0
    na = 0
    while len(stack) > 0:
        b = stack.pop()
        nb += 1
        first = t.b_first_action[b]
        if first < 0:
            continue
        na += num_actions
        for a in range(first, first + num_actions):
            c = t.a_first_child[a]
            while c >= 0:
                stack.append(c)
                c = t.b_next[c]
    return nb, na


@numba.njit(cache=True)
def _copy_subtree(src, dst, b0, num_actions):
    # breadth-first copy; sibling lists keep their order, b0 becomes node 0
    queue = np.empty(src.size[0], dtype=np.int64)
    remap = np.empty(src.size[0], dtype=np.int64)
    queue[0] = b0
    head = 0
    tail = 1
    nb = _new_belief(dst, -1, -1)
    remap[0] = nb
    while head < tail:
        b = queue[head]
        nb = remap[head]
        head += 1
        dst.counts[nb, :] = src.counts[b, :]
        dst.b_n[nb] = src.b_n[b]
        dst.b_entropy[nb] = src.b_entropy[b]
        dst.b_since[nb] = src.b_since[b]
        dst.b_visits[nb] = src.b_visits[b]
        first = src.b_first_action[b]
        if first < 0:
            continue
        _expand(dst, nb, num_actions)
        nfirst = dst.b_first_action[nb]
        for i in range(num_actions):
            a = first + i
            na = nfirst + i
            dst.a_visits[na] = src.a_visits[a]
            dst.a_value[na] = src.a_value[a]
            dst.a_maxdh[na] = src.a_maxdh[a]
            dst.a_through[na] = src.a_through[a]
            c = src.a_first_child[a]
            while c >= 0:
                queue[tail] = c
                remap[tail] = _new_belief(dst, na, src.b_obs[c])
                tail += 1
                c = src.b_next[c]


def extract_subtree(tree: ArrayTree, b0: int, num_actions: int, spare_b: int, spare_a: int) -> ArrayTree:
    """A new tree holding only the subtree under belief ``b0``, plus spare capacity."""
    nb, na = subtree_size(tree, b0, num_actions)
    fresh = allocate(tree.counts.shape[1], nb + spare_b, na + spare_a)
    _copy_subtree(tree, fresh, b0, num_actions)
    return fresh


def child_of_root(tree: ArrayTree, a: int, z: int) -> int:
    first = tree.b_first_action[0]
    if first < 0:
        return -1
    b = tree.a_first_child[first + a]
    while b >= 0:
        if tree.b_obs[b] == z:
            return int(b)
        b = tree.b_next[b]
    return -1


def filter_of(tree: ArrayTree, b: int) -> ParticleFilter:
    """The particle filter of belief ``b`` as a :class:`ParticleFilter` (exact cached entropy)."""
    f = ParticleFilter()
    row = tree.counts[b]
    f.counts = {int(s): int(row[s]) for s in np.flatnonzero(row)}
    f.n = int(tree.b_n[b])
    f.entropy = float(tree.b_entropy[b])
    f._since_refresh = int(tree.b_since[b])
    return f


def store_filter(tree: ArrayTree, b: int, f: ParticleFilter) -> None:
    tree.counts[b, :] = 0
    for s, c in f.counts.items():
        tree.counts[b, s] = c
    tree.b_n[b] = f.n
    tree.b_entropy[b] = f.entropy
    tree.b_since[b] = f._since_refresh
