import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from models_zoo import motivating_pomdp
from verisynth.checker import evaluate_policy
from verisynth.models import Fsc, Model, Policy, Spec
from verisynth.models.dfa import Dfa, Edge, reach_avoid_dfa
from verisynth.models.labels import BeliefLabeling, ObservationModel, constant_sensor
from verisynth.planner import (PlannerConfig, TaskProduct, active_perception_strategy, bayes_update,
                               entropy_over_critical, hoeffding_bound, jsd, map_labeling,
                               normalized_entropy, perception_tree, reach_avoid_instance,
                               run_episode, statistical_risk, synthesize_task_policy)

seeds = st.integers(0, 2**32 - 1)
probs01 = st.floats(0.0, 1.0)


def bel(*ps):
    return BeliefLabeling(("p",), np.array(ps, float).reshape(-1, 1))


# -- beliefs -------------------------------------------------------------------------------

def test_bayes_examples():
    post = bayes_update(bel(0.5), constant_sensor(0.9, 0.2), 0, [(0, "p", True)])
    assert post.prob(0, "p") == pytest.approx(9 / 11, abs=1e-15)
    post = bayes_update(bel(0.3), constant_sensor(1.0, 0.0), 0, [(0, "p", True)])
    assert post.prob(0, "p") == 1.0
    with pytest.warns(RuntimeWarning):
        post = bayes_update(bel(0.0), constant_sensor(1.0, 0.0), 0, [(0, "p", True)])
    assert post.prob(0, "p") == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(probs01, min_size=1, max_size=5), probs01, st.lists(st.booleans(), max_size=6))
@pytest.mark.filterwarnings("ignore:reading")
def test_uninformative_sensor_is_identity(ps, o, vals):
    b = bel(*ps)
    reads = [(i % len(ps), "p", v) for i, v in enumerate(vals)]
    post = bayes_update(b, constant_sensor(o, o), 0, reads)
    assert np.allclose(post.probs, b.probs, atol=1e-15)


def test_joint_probability():
    b = BeliefLabeling(("a", "b"), np.array([[0.5, 0.4]]))
    assert b.joint(0, ["a", "b"]) == pytest.approx(0.2)


def jsd_oracle(a, b):
    mpmath.mp.dps = 50
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    m = (a + b) / 2

    def kl(p, q):
        out = mpmath.mpf(0)
        for x, y in ((p, q), (1 - p, 1 - q)):
            if x > 0:
                out += x * mpmath.log(x / y, 2)
        return out

    return float(kl(a, m) / 2 + kl(b, m) / 2)


def test_jsd_examples():
    assert jsd(bel(0.3, 0.6), bel(0.3, 0.6)) == 0.0
    assert jsd(bel(0.0), bel(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert jsd(bel(0.5), bel(0.75)) == pytest.approx(jsd_oracle("0.5", "0.75"), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(probs01, probs01), min_size=1, max_size=6))
def test_jsd_properties(pairs):
    a, b = bel(*[x for x, _ in pairs]), bel(*[y for _, y in pairs])
    d = jsd(a, b)
    assert 0.0 <= d <= len(pairs) + 1e-12
    assert d == pytest.approx(jsd(b, a), abs=1e-12)
    want = sum(jsd_oracle(x, y) for x, y in pairs)
    assert d == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_map_rules():
    assert map_labeling(bel(1.0, 1.0)) == [frozenset({"p"})] * 2
    assert map_labeling(bel(0.5)) == [frozenset({"p"})]
    b = BeliefLabeling(("p1", "p2"), np.array([[0.4, 0.6]]))
    assert map_labeling(b) == [frozenset({"p2"})]


# -- task policies --------------------------------------------------------------------------

def random_mdp_labels(rng, n=3):
    rows = {}
    for s in range(n):
        for a in ("a", "b"):
            k = int(rng.integers(1, n + 1))
            succ = rng.choice(n, size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            rows[(s, a)] = [(int(t), float(p)) for t, p in zip(succ, w)]
    labels = [frozenset(p for p in ("goal", "obs") if rng.random() < 0.3) for _ in range(n)]
    return Model.build(n, rows), labels


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_task_policy_brute_force(seed):
    mdp, labels = random_mdp_labels(np.random.default_rng(seed))
    dfa = reach_avoid_dfa()
    plan = synthesize_task_policy(mdp, dfa, labels)
    prod = TaskProduct(mdp, dfa)
    pm = prod.model(labels)
    best = 0.0
    for choice in itertools.product(*[range(len(a)) for a in pm.actions]):
        pol = Policy.deterministic({x: pm.actions[x][c] for x, c in enumerate(choice)})
        best = max(best, evaluate_policy(pm, pol, Spec.reach(prod.targets)).init_value)
    assert plan.value == pytest.approx(best, abs=1e-9)


def test_task_policy_examples():
    mdp = Model.build(3, {(0, "a"): [(1, 1.0)], (1, "a"): [(2, 1.0)], (2, "a"): [(2, 1.0)]})
    dfa = reach_avoid_dfa()
    wall = [frozenset(), frozenset({"obs"}), frozenset({"goal"})]
    assert synthesize_task_policy(mdp, dfa, wall).value == 0.0
    at_start = [frozenset({"goal"}), frozenset(), frozenset()]
    assert synthesize_task_policy(mdp, dfa, at_start).value == 1.0
    free = [frozenset(), frozenset(), frozenset({"goal"})]
    assert synthesize_task_policy(mdp, dfa, free).value == 1.0


# -- risk --------------------------------------------------------------------------------------

def test_hoeffding():
    assert hoeffding_bound(1000, 0.05) == pytest.approx(2 * np.exp(-5), rel=1e-15)
    assert hoeffding_bound(1000, 0.05) == pytest.approx(0.01348, abs=1e-5)


def gate_instance(p):
    mdp = Model.build(2, {(0, "a"): [(1, 1.0)], (1, "a"): [(1, 1.0)]})
    belief = BeliefLabeling(("goal", "obs"), np.array([[0.0, 0.0], [p, 0.0]]))
    return mdp, reach_avoid_dfa(), belief


def test_risk_certain_belief_is_zero():
    mdp, dfa, _ = gate_instance(1.0)
    b = BeliefLabeling(("goal", "obs"), np.array([[0.0, 0.0], [1.0, 0.0]]))
    plan = synthesize_task_policy(mdp, dfa, map_labeling(b))
    rep = statistical_risk(mdp, dfa, plan, b, 50, seed=1)
    assert rep.risk == 0.0 and np.all(rep.samples == 1.0)


def test_risk_two_term_expectation():
    mdp, dfa, b = gate_instance(0.5)
    plan = synthesize_task_policy(mdp, dfa, map_labeling(b))
    rep = statistical_risk(mdp, dfa, plan, b, 4000, seed=2, eps=0.05)
    # Pr(sat | goal) = 1, Pr(sat | no goal) = 0
    assert set(np.unique(rep.samples)) <= {0.0, 1.0}
    assert abs(rep.empirical_mean - 0.5) < 0.05
    assert rep.map_value == 1.0 and rep.risk == pytest.approx(1.0 - rep.empirical_mean)
    assert rep.hoeffding == hoeffding_bound(4000, 0.05)
    again = statistical_risk(mdp, dfa, plan, b, 4000, seed=2, eps=0.05)
    assert np.array_equal(again.samples, rep.samples)


# -- active perception ----------------------------------------------------------------------

def door_world():
    """0 = start, 1 = in front of the door, 2 = door.  Only cell 1 sees the door."""
    rows = {(0, "go"): [(1, 1.0)], (0, "back"): [(0, 1.0)],
            (1, "go"): [(1, 1.0)], (1, "back"): [(0, 1.0)],
            (2, "go"): [(2, 1.0)], (2, "back"): [(1, 1.0)]}
    mdp = Model.build(3, rows)
    belief = BeliefLabeling(("goal", "obs"), np.array([[0, 0], [0, 0], [0, 0.5]], float))
    sensor = ObservationModel(lambda s1, s2, p, b: 1.0 if b else 0.0, lambda s1, s2: s1 == 1)
    return mdp, belief, sensor


def test_perception_out_and_back():
    mdp, belief, sensor = door_world()
    dfa = reach_avoid_dfa()
    here = TaskProduct(mdp, dfa).initial([frozenset()] * 3)
    cfg = PlannerConfig(C_a=2, beta=0.5)
    assert active_perception_strategy(mdp, dfa, here, belief, sensor, cfg) == ["go", "back"]


def test_perception_self_loops_empty():
    mdp = Model.build(2, {(0, "a"): [(0, 1.0)], (0, "b"): [(0, 1.0)],
                          (1, "a"): [(1, 1.0)], (1, "b"): [(1, 1.0)]})
    belief = BeliefLabeling(("goal", "obs"), np.full((2, 2), 0.5))
    dfa = reach_avoid_dfa()
    here = TaskProduct(mdp, dfa).initial([frozenset()] * 2)
    cfg = PlannerConfig(C_a=1)
    assert active_perception_strategy(mdp, dfa, here, belief, constant_sensor(0.7, 0.7), cfg) == []


def test_perception_beta_one_maximizes_safety():
    mdp, belief, sensor = door_world()
    dfa = reach_avoid_dfa()
    here = TaskProduct(mdp, dfa).initial([frozenset()] * 3)
    node = perception_tree(mdp, dfa, here, belief, sensor, PlannerConfig(C_a=2, beta=1.0))
    assert node.safety == 1.0 and node.actions == ()
    node = perception_tree(mdp, dfa, here, belief, sensor, PlannerConfig(C_a=2, beta=0.0))
    assert node.info == pytest.approx(1.0) and node.actions == ("go",)


# -- episodes ---------------------------------------------------------------------------------

def test_trivial_episode():
    mdp, belief, sensor = door_world()
    truth = [frozenset({"goal"}), frozenset(), frozenset()]
    tr = run_episode(mdp, reach_avoid_dfa(), truth, sensor, belief, PlannerConfig())
    assert tr.success and tr.steps == 0 and tr.plans == 1 and len(tr.records) == 1


def test_episode_replay_deterministic():
    inst = reach_avoid_instance(size=4, density=0.25, seed=5)
    for name in ("update", "update-div-info"):
        cfg = PlannerConfig.variant(name, seed=11, N=30, max_steps=30)
        a = run_episode(inst.mdp, inst.dfa, inst.truth, inst.sensor, inst.prior, cfg)
        b = run_episode(inst.mdp, inst.dfa, inst.truth, inst.sensor, inst.prior, cfg)
        assert a.to_jsonl() == b.to_jsonl() and a.summary() == b.summary()
        assert a.outcome in ("success", "failure", "timeout")


def test_timeout_outcome():
    mdp, belief, sensor = door_world()
    truth = [frozenset(), frozenset(), frozenset()]
    dfa = Dfa(("goal",), 2, 0, frozenset({1}), (Edge(0, (("goal", True),), 1), Edge(0, (), 0),
                                                Edge(1, (), 1)))
    b = BeliefLabeling(("goal",), np.full((3, 1), 0.6))
    tr = run_episode(mdp, dfa, truth, constant_sensor(0.5, 0.5), b, PlannerConfig(max_steps=5, N=10))
    assert tr.outcome == "timeout" and tr.steps == 5


# -- entropy over critical pairs ---------------------------------------------------------

def test_entropy_values():
    m, sp = motivating_pomdp(), Spec.reach({3}, 0.9)
    fill = {"goal": {"up": 1.0}, "sink": {"up": 1.0}}
    det = entropy_over_critical(m, Fsc.memoryless({"blue": {"up": 1.0}, **fill}), sp)
    assert det.H == 0.0 and det.signal(0.5) == "more-memory"
    uni = entropy_over_critical(m, Fsc.memoryless({"blue": {"up": 0.5, "down": 0.5}, **fill}), sp)
    assert uni.H == pytest.approx(1.0) and uni.signal(0.5) == "more-data"
    am = {(0, "blue"): {"up": 0.5, "down": 0.5}, (1, "blue"): {"up": 1.0}}
    for n in (0, 1):
        am[(n, "goal")] = {"up": 1.0}
        am[(n, "sink")] = {"up": 1.0}
    mu = {(0, "blue", "up"): {1: 1.0}, (0, "blue", "down"): {1: 1.0}}
    half = entropy_over_critical(m, Fsc(2, am, mu), sp)
    assert half.H == pytest.approx(0.5)


def test_entropy_satisfied_is_null():
    m = motivating_pomdp()
    am = {(0, "blue"): {"up": 1.0}, (1, "blue"): {"down": 1.0}}
    for n in (0, 1):
        am[(n, "goal")] = {"up": 1.0}
        am[(n, "sink")] = {"up": 1.0}
    res = entropy_over_critical(m, Fsc(2, am, {(0, "blue", "up"): {1: 1.0}}), Spec.reach({3}, 0.9))
    assert res.H is None and res.crit == frozenset() and res.signal(0.5) is None


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0))
def test_entropy_permutation_invariant(p):
    m, sp = motivating_pomdp(), Spec.reach({3}, 0.9)
    swap = {"up": "down", "down": "up"}
    rows = {(s, swap[a]): [(t, e.p) for t, e in row]
            for s in range(m.n) for a, row in zip(m.actions[s], m.transitions[s])}
    m2 = Model.build(m.n, rows, obs=dict(enumerate(m.obs)), labels={3: ["goal"]}, kind="pomdp")
    d = {a: w for a, w in {"up": p, "down": 1 - p}.items() if w > 0}
    fill = {"goal": {"up": 1.0}, "sink": {"up": 1.0}}
    f1 = Fsc.memoryless({"blue": d, **fill})
    f2 = Fsc.memoryless({"blue": {swap[a]: w for a, w in d.items()},
                         "goal": {"down": 1.0}, "sink": {"down": 1.0}})
    a, b = entropy_over_critical(m, f1, sp), entropy_over_critical(m2, f2, sp)
    assert a.H == pytest.approx(b.H, abs=1e-12)
    assert normalized_entropy(d, 2) == pytest.approx(normalized_entropy({swap[k]: v for k, v in d.items()}, 2))
