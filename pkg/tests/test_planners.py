import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_rng
from pomcpe.core import PomdpModel
from pomcpe.domains.tiger import LISTEN
from pomcpe.particles import ParticleFilter
from pomcpe.planners import (
    BeliefNode,
    Planner,
    PlannerConfig,
    ZeroBudgetWarning,
    advance_root,
    back_propagate_entropy,
    cutoff_depth,
    entropy_term,
    pomcpe_select,
    rollout,
    search,
    simulate,
    ucb1_select,
)
from pomcpe.planners.tree import entropy_bonus, ucb_score


def expanded(num_actions=2, counts=None):
    node = BeliefNode(ParticleFilter(counts or {0: 1, 1: 1}))
    node.expand(num_actions)
    return node


def visit(node, a, n, q):
    node.children[a].visit_count = n
    node.children[a].q_value = q


def chain(depth):
    """Root -> action 0 -> belief -> action 0 ... ; returns the action nodes top-down."""
    node = expanded()
    actions = []
    for _ in range(depth):
        a = node.children[0]
        actions.append(a)
        node = a.child(0)
        node.filter = ParticleFilter({0: 1, 1: 1})
        node.expand(2)
    return actions


def loop_model(reward=-1.0, gamma=0.95):
    """One non-terminal state that loops forever."""
    return PomdpModel(np.ones((1, 2, 1)), np.ones((2, 1, 1)), np.full((1, 2), reward), gamma, [1.0])


# --- configuration -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(entropy_combine="mean")
    with pytest.raises(ValueError):
        PlannerConfig(simulations=None, time_ms=None)
    with pytest.raises(ValueError):
        PlannerConfig(gamma=1.0)


def test_config_round_trip():
    cfg = PlannerConfig(k_threshold=math.inf, exploration_c=3.0)
    assert PlannerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.k_threshold_int() > 10**15


def test_cutoff_depth():
    d = cutoff_depth(0.95, 0.01)
    assert 0.95**d < 0.01 <= 0.95 ** (d - 1)
    assert d == 90


# --- scores ------------------------------------------------------------------

def test_ucb_score_example():
    assert ucb_score(5.0, 100, 10, 50.0) == pytest.approx(38.93, abs=0.01)


def test_entropy_bonus_example():
    assert entropy_bonus(math.log(2), 8, 500.0) == pytest.approx(240.3, abs=0.1)


def test_entropy_bonus_guard_is_finite():
    assert math.isfinite(entropy_bonus(0.5, 1, 500.0))
    assert entropy_bonus(0.5, 1, 500.0) == pytest.approx(500 * 0.5 / math.sqrt(math.log(2)))
    assert entropy_bonus(0.5, 2, 500.0) == pytest.approx(500 * 0.5 / math.sqrt(math.log(3)))


@given(st.floats(0.01, 5.0), st.integers(3, 10**6))
def test_entropy_bonus_decays(dh, n):
    assert entropy_bonus(dh, n + 1, 500.0) < entropy_bonus(dh, n, 500.0)


@given(st.floats(-2.0, 2.0), st.floats(0.001, 1.0), st.integers(1, 1000))
def test_entropy_bonus_increases_with_reduction(dh, step, n):
    assert entropy_bonus(dh + step, n, 500.0) > entropy_bonus(dh, n, 500.0)


# --- selection ---------------------------------------------------------------

def test_unvisited_action_first():
    node = expanded(3)
    node.visit_count = 50
    visit(node, 0, 25, 100.0)
    visit(node, 2, 25, 100.0)
    assert ucb1_select(node, 50.0) == 1
    assert pomcpe_select(node, 50.0, 500.0) == 1


def test_ties_go_to_lowest_index():
    node = expanded(3)
    node.visit_count = 30
    for a in range(3):
        visit(node, a, 10, 1.0)
    assert ucb1_select(node, 50.0) == 0


def test_ucb_prefers_rarely_tried():
    node = expanded(2)
    node.visit_count = 100
    visit(node, 0, 90, 1.0)
    visit(node, 1, 10, 1.0)
    assert ucb1_select(node, 1.0) == 1
    assert ucb1_select(node, 0.0) == 0


@given(st.lists(st.tuples(st.integers(1, 50), st.floats(-10, 10)), min_size=2, max_size=5), st.floats(0, 100))
def test_zero_entropy_scale_matches_ucb1(stats, c):
    node = expanded(len(stats))
    node.visit_count = sum(n for n, _ in stats)
    for a, (n, q) in enumerate(stats):
        visit(node, a, n, q)
    assert pomcpe_select(node, c, 0.0, math.inf) == ucb1_select(node, c)


def test_entropy_bonus_steers_selection():
    node = expanded(2)
    node.visit_count = 20
    visit(node, 0, 10, 1.0)
    visit(node, 1, 10, 0.0)
    # action 1 leads to a belief with a single state: reduction ln 2
    informative = node.children[1].child(0)
    informative.filter = ParticleFilter({0: 10})
    node.children[1].particle_throughput = 10
    assert ucb1_select(node, 0.0) == 0
    assert pomcpe_select(node, 0.0, 10.0) == 1


# --- entropy term and back-propagation ---------------------------------------

def test_entropy_term_without_children_is_zero():
    node = expanded()
    assert entropy_term(node.children[0]) == 0.0


def test_entropy_term_propagates_full_reduction():
    actions = chain(3)
    leaf_action = actions[-1]
    child = leaf_action.child(0)
    child.filter = ParticleFilter({0: 10})
    leaf_action.particle_throughput = 10
    assert entropy_term(leaf_action, k_threshold=10) == pytest.approx(2 * math.log(2))
    for a in actions:
        assert a.max_entropy_reduction == pytest.approx(math.log(2))


def test_entropy_term_below_threshold_does_not_propagate():
    actions = chain(2)
    a = actions[-1]
    a.child(0).filter = ParticleFilter({0: 5})
    a.particle_throughput = 5
    assert entropy_term(a, k_threshold=10) == pytest.approx(math.log(2))
    assert all(x.max_entropy_reduction == 0.0 for x in actions)


def test_entropy_term_no_reduction_returns_stored_max():
    actions = chain(1)
    a = actions[0]
    a.max_entropy_reduction = 0.3
    a.child(0).filter = ParticleFilter({0: 6, 1: 6})
    a.particle_throughput = 12
    assert entropy_term(a) == pytest.approx(0.3)
    assert entropy_term(a, combine="max") == pytest.approx(0.3)


def test_entropy_term_weights_children_by_size():
    node = expanded(1, {0: 2, 1: 2})
    a = node.children[0]
    a.child(0).filter = ParticleFilter({0: 3})
    a.child(1).filter = ParticleFilter({0: 1, 1: 1})
    a.particle_throughput = 5
    want = math.log(2) - (3 / 5 * 0.0 + 2 / 5 * math.log(2))
    assert entropy_term(a, k_threshold=100) == pytest.approx(want)


def test_back_propagate_semantics():
    actions = chain(4)
    back_propagate_entropy(actions[-1], 0.5)
    assert [a.max_entropy_reduction for a in actions] == [0.5] * 4
    back_propagate_entropy(actions[-1], 0.2)
    assert [a.max_entropy_reduction for a in actions] == [0.5] * 4
    fresh = chain(3)
    back_propagate_entropy(fresh[-1], -0.4)
    assert [a.max_entropy_reduction for a in fresh] == [0.0] * 3


# --- simulate and rollout ----------------------------------------------------

def test_rollout_geometric_series():
    m = loop_model()
    cfg = PlannerConfig(epsilon=0.5)
    d = cutoff_depth(0.95, 0.5)
    want = -(1 - 0.95**d) / (1 - 0.95)
    assert rollout(0, 0, m, cfg, make_rng()) == pytest.approx(want)
    assert rollout(0, d, m, cfg, make_rng()) == 0.0


def test_rollout_from_terminal_state_is_zero(hallway):
    s = int(np.flatnonzero(hallway.terminal)[0])
    assert rollout(s, 0, hallway, PlannerConfig(), make_rng()) == 0.0


def test_simulate_past_cutoff_leaves_tree_untouched(tiger):
    node = BeliefNode()
    cfg = PlannerConfig()
    assert simulate(0, node, 10**6, tiger, cfg, make_rng()) == 0.0
    assert node.is_leaf and node.visit_count == 0 and node.filter.n == 0


def test_simulate_expands_leaf(tiger):
    node = BeliefNode()
    simulate(0, node, 0, tiger, PlannerConfig(), make_rng())
    assert len(node.children) == tiger.num_actions
    assert node.visit_count == 1


def test_simulate_terminal_entry(tiger):
    node = BeliefNode()
    assert simulate(0, node, 3, tiger, PlannerConfig(), make_rng(), terminal=True) == 0.0
    assert node.is_leaf


def test_search_single_simulation(tiger):
    root = BeliefNode(ParticleFilter({0: 1, 1: 1}))
    # one simulation expands the root but visits no action, so the result is flagged
    with pytest.warns(ZeroBudgetWarning):
        res = search(root, tiger, PlannerConfig(simulations=1), make_rng())
    assert 0 <= res.action < 3
    assert not root.is_leaf
    assert all(a.is_leaf for act in root.children for a in act.children.values())


def test_zero_budget_warns(tiger):
    root = BeliefNode(ParticleFilter({0: 1}))
    with pytest.warns(ZeroBudgetWarning):
        res = search(root, tiger, PlannerConfig(simulations=0), make_rng())
    assert res.action == 0 and res.warning


def test_time_budget_runs(tiger):
    p = Planner(tiger, PlannerConfig(simulations=None, time_ms=30.0))
    rng = make_rng()
    p.reset(rng)
    assert p.search(rng).simulations > 0


# --- tree invariants ---------------------------------------------------------

def walk(node):
    yield node
    if node.children:
        for a in node.children:
            for child in a.children.values():
                yield from walk(child)


def test_tree_invariants_after_search(hallway):
    rng = make_rng(4)
    cfg = PlannerConfig(simulations=400, initial_particles=50)
    root = BeliefNode(ParticleFilter({int(s): 25 for s in np.flatnonzero(hallway.initial)}))
    returns = {a: [] for a in range(hallway.num_actions)}
    history = []
    for _ in range(cfg.simulations):
        before = [a.visit_count for a in root.children] if root.children else None
        s = root.filter.sample(rng)
        R = simulate(s, root, 0, hallway, cfg, rng, entropy=True)
        if before is not None:
            (a,) = [i for i, x in enumerate(root.children) if x.visit_count != before[i]]
            returns[a].append(R)
        history.append([a.max_entropy_reduction for a in root.children])
    for node in walk(root):
        if node.children:
            assert node.visit_count >= sum(a.visit_count for a in node.children)
            assert len(node.children) == hallway.num_actions
            for a in node.children:
                assert a.particle_throughput == sum(c.filter.n for c in a.children.values())
                for child in a.children.values():
                    if child.children:
                        for below in child.children:
                            assert a.max_entropy_reduction >= below.max_entropy_reduction
    for a, rs in returns.items():
        if rs:
            assert root.children[a].q_value == pytest.approx(sum(rs) / len(rs), abs=1e-9)
    hist = np.array(history[1:])
    assert (np.diff(hist, axis=0) >= 0).all()


# --- re-rooting --------------------------------------------------------------

def test_advance_root_keeps_existing_child(tiger):
    rng = make_rng(1)
    cfg = PlannerConfig(simulations=300, initial_particles=20)
    root = BeliefNode(ParticleFilter({0: 10, 1: 10}))
    search(root, tiger, cfg, rng)
    child = root.children[LISTEN].children[0]
    visits = child.visit_count
    new = advance_root(root, LISTEN, 0, tiger, cfg, rng)
    assert new is child and new.parent is None
    assert new.visit_count == visits
    assert new.filter.n >= cfg.initial_particles


def test_advance_root_creates_missing_child(tiger):
    cfg = PlannerConfig(initial_particles=40)
    root = BeliefNode(ParticleFilter({0: 10, 1: 10}))
    new = advance_root(root, LISTEN, 1, tiger, cfg, make_rng())
    assert new.filter.n == 40 and new.is_leaf


def test_advance_root_terminal(tiger):
    root = BeliefNode(ParticleFilter({0: 1}))
    assert advance_root(root, 1, 0, tiger, PlannerConfig(), make_rng(), terminal=True) is None


# --- backends ----------------------------------------------------------------

def run_both(m, variant, cfg, steps, seed):
    """Drive both backends through one episode; returns the per-step results of each."""
    planners = {b: Planner(m, cfg, variant, b) for b in ("reference", "compiled")}
    rngs = {b: make_rng(seed) for b in planners}
    env = make_rng(seed + 1000)
    s = m.sample_initial(env)
    for b in planners:
        planners[b].reset(rngs[b])
    out = {b: [] for b in planners}
    for _ in range(steps):
        res = {b: planners[b].search(rngs[b]) for b in planners}
        for b in planners:
            out[b].append((res[b], planners[b].root_filter().counts, planners[b].root_filter().entropy))
        a = res["reference"].action
        step = m.step(s, a, env)
        for b in planners:
            planners[b].advance(a, step.observation, rngs[b], step.done)
        if step.done:
            break
        s = step.next_state
    return out


@pytest.mark.parametrize("variant", ["pomcp", "pomcpe"])
@pytest.mark.parametrize("domain", ["tiger", "hallway"])
def test_compiled_engine_matches_reference(variant, domain, tiger, hallway):
    m = tiger if domain == "tiger" else hallway
    cfg = PlannerConfig(simulations=200, initial_particles=30, exploration_c=60.0, entropy_e=300.0)
    out = run_both(m, variant, cfg, steps=8, seed=3)
    assert len(out["reference"]) == len(out["compiled"]) >= 1
    for (r0, c0, h0), (r1, c1, h1) in zip(out["reference"], out["compiled"]):
        assert r0.action == r1.action
        assert r0.q_values == r1.q_values
        assert r0.visit_counts == r1.visit_counts
        assert c0 == c1 and h0 == h1


def test_compiled_engine_max_combine_and_visits_rule(hallway):
    cfg = PlannerConfig(simulations=150, initial_particles=30, entropy_combine="max", final_selection="visits")
    out = run_both(hallway, "pomcpe", cfg, steps=5, seed=9)
    for (r0, *_), (r1, *_) in zip(out["reference"], out["compiled"]):
        assert r0 == r1.__class__(**{**r1.__dict__, "elapsed": r0.elapsed})


def test_reduction_to_pomcp(hallway):
    base = PlannerConfig(simulations=500, initial_particles=50, exploration_c=50.0)
    reduced = PlannerConfig(simulations=500, initial_particles=50, exploration_c=50.0, entropy_e=0.0, k_threshold=math.inf)
    a = Planner(hallway, base, "pomcp")
    b = Planner(hallway, reduced, "pomcpe")
    ra, rb = make_rng(5), make_rng(5)
    a.reset(ra)
    b.reset(rb)
    x, y = a.search(ra), b.search(rb)
    assert x.q_values == y.q_values and x.visit_counts == y.visit_counts


def test_compiled_tree_grows_with_time_budget(hallway):
    p = Planner(hallway, PlannerConfig(simulations=None, time_ms=50.0, initial_particles=20))
    rng = make_rng()
    p.reset(rng)
    res = p.search(rng)
    # the first simulation only expands the root
    assert sum(res.visit_counts) == res.simulations - 1


def test_zero_budget_compiled_warns(tiger):
    p = Planner(tiger, PlannerConfig(simulations=0))
    rng = make_rng()
    p.reset(rng)
    with pytest.warns(ZeroBudgetWarning):
        assert p.search(rng).action == 0


def test_root_belief_override(tiger):
    p = Planner(tiger, PlannerConfig(simulations=10))
    rng = make_rng()
    p.reset(rng, belief=ParticleFilter({0: 96, 1: 4}))
    assert p.root_filter().counts == {0: 96, 1: 4}


def test_pomcp_prefers_listening_at_uniform_belief(tiger):
    p = Planner(tiger, PlannerConfig(simulations=10_000, exploration_c=50.0), "pomcp")
    rng = make_rng(21)
    p.reset(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = p.search(rng)
    assert res.action == LISTEN
    assert res.q_values[LISTEN] > max(res.q_values[1:])
