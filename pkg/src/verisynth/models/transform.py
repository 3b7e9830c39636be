"""Structural transformations: induced chains, observation expansion, FSC
products and the simple/binary normal form."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

from .core import Fsc, Model, ModelError, Point, Policy, _obs_support


def _is_dirac(row) -> bool:
    return len(row) == 1 and not row[0][1].is_interval


# -- induced chains -----------------------------------------------------------

def induced_mc(model: Model, policy: Policy | None = None) -> Model:
    """Markov chain obtained by resolving the choices of ``model`` with ``policy``.

    States without a policy entry must have a single action unless they are
    unreachable, in which case their first action is used.  Interval rows are
    carried through when the policy is deterministic at that state.
    """
    choice = {} if policy is None else policy.choice
    reach = None
    acts, trans, rews = [], [], []
    has_rew = model.rewards is not None
    for s in range(model.n):
        d = choice.get(s)
        if d is None:
            if len(model.actions[s]) > 1:
                if reach is None:
                    reach = model.reachable()
                if s in reach:
                    raise ModelError(f"policy undefined at reachable state {s}")
            d = {model.actions[s][0]: 1.0}
        support = [(a, p) for a, p in d.items() if p > 0]
        idx = [(model.action_index(s, a), p) for a, p in support]
        if len(idx) == 1:
            i = idx[0][0]
            acts.append((model.actions[s][i],))
            trans.append((model.transitions[s][i],))
            rews.append((model.reward(s, i),))
            continue
        acc: dict[int, float] = defaultdict(float)
        for i, p in idx:
            for t, e in model.transitions[s][i]:
                if e.is_interval:
                    raise ModelError(f"state {s}: randomized choice over interval rows has no "
                                     "interval-chain representation; use robust_value with the policy")
                acc[t] += p * e.p
        acts.append(("tau",))
        trans.append((tuple((t, Point(min(v, 1.0))) for t, v in sorted(acc.items()) if v > 0),))
        rews.append((sum(p * model.reward(s, i) for i, p in idx),))
    kind = "mc" if model.obs is None else model.kind
    return model.replace(actions=tuple(acts), transitions=tuple(trans),
                         rewards=tuple(rews) if has_rew else None, kind=kind)


# -- stochastic observations ----------------------------------------------------

def expand_observations(model: Model) -> Model:
    """Split each state with a distribution over observations into one copy per
    observation so that the observation function becomes deterministic."""
    if model.obs is None or model.deterministic_obs:
        return model
    supp = []
    for s in range(model.n):
        z = model.obs[s]
        if isinstance(z, Mapping):
            supp.append([(y, float(p)) for y, p in z.items() if p > 0])
        else:
            supp.append([(z, 1.0)])
    index: dict[tuple[int, object], int] = {}
    owner = []
    for s in range(model.n):
        for y, _ in supp[s]:
            index[(s, y)] = len(owner)
            owner.append((s, y))
    acts, trans, rews, obs, labels, names = [], [], [], [], [], []
    for s, y in owner:
        rows = []
        for row in model.transitions[s]:
            new = []
            for t, e in row:
                if e.is_interval and len(supp[t]) > 1:
                    raise ModelError(f"interval entry into state {t} with stochastic observations "
                                     "is not supported")
                for y2, q in supp[t]:
                    new.append((index[(t, y2)], e if q == 1.0 else Point(e.p * q)))
            rows.append(tuple(new))
        acts.append(model.actions[s])
        trans.append(tuple(rows))
        if model.rewards is not None:
            rews.append(model.rewards[s])
        obs.append(y)
        labels.append(model.labels[s])
        names.append(model.name(s) if len(supp[s]) == 1 else f"{model.name(s)}|{y}")
    init = tuple((index[(s, y)], p * q) for s, p in model.initial for y, q in supp[s] if p * q > 0)
    return Model(actions=tuple(acts), transitions=tuple(trans), initial=init,
                 labels=tuple(labels), obs=tuple(obs),
                 rewards=tuple(rews) if model.rewards is not None else None,
                 kind=model.kind, names=tuple(names))


def expansion_origin(model: Model) -> list[int]:
    """Original state of every state of ``expand_observations(model)``."""
    if model.obs is None or model.deterministic_obs:
        return list(range(model.n))
    return [s for s in range(model.n) for _ in _obs_support(model.obs[s])]


# -- FSC products -----------------------------------------------------------------

def product_action(a: str, n: int, k: int) -> str:
    return a if k == 1 else f"{a}@{n}"


def product_obs(z, n: int, k: int):
    return z if k == 1 else (z, n)


def fsc_product(model: Model, k: int) -> Model:
    """Product of ``model`` with ``k`` memory nodes.

    State ``(s, n)`` has index ``s*k + n``; action ``a@n'`` plays ``a`` and moves
    to node ``n'``; the observation is ``(z, n)``.  Memoryless
    observation-based policies on the product correspond to ``k``-node FSCs.
    """
    if k < 1:
        raise ModelError("memory size must be at least 1")
    if model.obs is None:
        raise ModelError("FSC product needs an observation function")
    model = expand_observations(model)
    if k == 1:
        return model
    acts, trans, rews, obs, labels, names = [], [], [], [], [], []
    for s in range(model.n):
        for n in range(k):
            a_s, r_s, w_s = [], [], []
            for i, a in enumerate(model.actions[s]):
                for n2 in range(k):
                    a_s.append(product_action(a, n2, k))
                    r_s.append(tuple((t * k + n2, e) for t, e in model.transitions[s][i]))
                    w_s.append(model.reward(s, i))
            acts.append(tuple(a_s))
            trans.append(tuple(r_s))
            rews.append(tuple(w_s))
            obs.append(product_obs(model.obs[s], n, k))
            labels.append(model.labels[s])
            names.append(f"{model.name(s)},{n}")
    init = tuple((s * k, p) for s, p in model.initial)
    return Model(actions=tuple(acts), transitions=tuple(trans), initial=init,
                 labels=tuple(labels), obs=tuple(obs),
                 rewards=tuple(rews) if model.rewards is not None else None,
                 kind=model.kind, names=tuple(names))


def fsc_from_product_policy(model: Model, k: int, by_obs: Mapping) -> Fsc:
    """Fold a memoryless policy on ``fsc_product(model, k)`` (given per product
    observation) back into a ``k``-node FSC on ``model``."""
    model = expand_observations(model)
    am, mu = {}, {}
    acts_of = {}
    for s in range(model.n):
        acts_of.setdefault(model.obs[s], model.actions[s])
    for z, actions in acts_of.items():
        for n in range(k):
            d = by_obs.get(product_obs(z, n, k))
            if d is None:
                continue
            gamma = {}
            for a in actions:
                w = [d.get(product_action(a, n2, k), 0.0) for n2 in range(k)]
                tot = sum(w)
                gamma[a] = tot
                if tot > 0 and k > 1:
                    mu[(n, z, a)] = {n2: x / tot for n2, x in enumerate(w) if x > 0}
            am[(n, z)] = gamma
    return Fsc(k, am, mu)


def product_policy_from_fsc(model: Model, fsc: Fsc) -> Policy:
    """State-based policy on ``fsc_product(model, fsc.n_nodes)`` encoding ``fsc``."""
    k = fsc.n_nodes
    ex = expand_observations(model)
    fsc.check_compatible(ex)
    choice = {}
    for s in range(ex.n):
        z = ex.obs[s]
        for n in range(k):
            d = {}
            for a, p in fsc.act(n, z).items():
                if p <= 0:
                    continue
                for n2, q in fsc.update(n, z, a).items():
                    if q > 0:
                        key = product_action(a, n2, k)
                        d[key] = d.get(key, 0.0) + p * q
            choice[s * k + n] = d
    if fsc.initial_node != 0:
        raise ModelError("product encoding assumes initial node 0")
    return Policy(choice)


# -- simple / binary normal form ----------------------------------------------------

@dataclass(frozen=True)
class SimpleMap:
    """Bookkeeping of :func:`to_simple_with_map`.

    ``origin[t]`` is the original state of new state ``t`` (its own index for
    kept states).  ``paths[z][a]`` lists the ``(observation, edge action)``
    decisions leading to original action ``a`` under original observation
    ``z``; for unobserved models the key is the state index.
    """

    origin: tuple[int, ...]
    paths: Mapping


def _needs_split(model: Model, s: int) -> bool:
    k = len(model.actions[s])
    if k > 2:
        return True
    return k == 2 and not all(_is_dirac(r) for r in model.transitions[s])


def to_simple_with_map(model: Model) -> tuple[Model, SimpleMap]:
    """Binary/simple normal form.

    Choice states get at most two actions with Dirac outcomes; more actions
    become a balanced binary tree rooted at the original state, and
    non-Dirac outcomes of a choice move to a fresh single-action state.
    """
    model = expand_observations(model)
    # decide per observation class so that observation-equal states split alike
    key = (lambda s: model.obs[s]) if model.obs is not None else (lambda s: s)
    split_cls = defaultdict(bool)
    for s in range(model.n):
        split_cls[key(s)] |= _needs_split(model, s)
    if not any(split_cls.values()):
        return model, SimpleMap(tuple(range(model.n)), {})

    acts = [list(a) for a in model.actions]
    trans = [list(r) for r in model.transitions]
    rews = [list(model.rewards[s]) if model.rewards is not None else [0.0] * len(acts[s])
            for s in range(model.n)]
    obs = list(model.obs) if model.obs is not None else None
    labels = list(model.labels)
    names = [model.name(s) for s in range(model.n)]
    origin = list(range(model.n))
    paths: dict = {}

    def new_state(parent, a_list, r_list, w_list, z, name):
        acts.append(a_list)
        trans.append(r_list)
        rews.append(w_list)
        if obs is not None:
            obs.append(z)
        labels.append(frozenset())
        names.append(name)
        origin.append(parent)
        return len(acts) - 1

    for s in range(model.n):
        z = key(s)
        if not split_cls[z]:
            continue
        orig_acts = model.actions[s]
        zo = model.obs[s] if model.obs is not None else None
        leaf_target = {}
        for i, a in enumerate(orig_acts):
            row = model.transitions[s][i]
            if _is_dirac(row):
                leaf_target[a] = row[0][0]
            else:
                leaf_target[a] = new_state(s, [a], [row], [0.0],
                                           (zo, a) if zo is not None else None,
                                           f"{names[s]}@{a}")
        reward_of = {a: model.reward(s, i) for i, a in enumerate(orig_acts)}
        counter = [0]
        path_rec: dict[str, list] = {}

        def build(node, group, trail):
            # node: state index to fill; group: actions below it
            mid = (len(group) + 1) // 2
            halves = [group[:mid], group[mid:]] if len(group) > 1 else [group]
            a_list, r_list, w_list = [], [], []
            node_obs = obs[node] if obs is not None else node
            for h in halves:
                if len(h) == 1:
                    a = h[0]
                    a_list.append(a)
                    r_list.append(((leaf_target[a], Point(1.0)),))
                    w_list.append(reward_of[a])
                    path_rec[a] = trail + [(node_obs, a)]
                else:
                    counter[0] += 1
                    j = counter[0]
                    child = new_state(s, [], [], [], (zo, j) if zo is not None else None,
                                      f"{names[s]}#{j}")
                    name = "|".join(h)
                    a_list.append(name)
                    r_list.append(((child, Point(1.0)),))
                    w_list.append(0.0)
                    build(child, h, trail + [(node_obs, name)])
            acts[node], trans[node], rews[node] = a_list, r_list, w_list

        build(s, list(orig_acts), [])
        paths.setdefault(z, path_rec)

    out = Model(actions=tuple(tuple(a) for a in acts),
                transitions=tuple(tuple(r) for r in trans),
                initial=model.initial, labels=tuple(labels),
                obs=tuple(obs) if obs is not None else None,
                rewards=tuple(tuple(w) for w in rews) if model.rewards is not None else None,
                kind=model.kind, names=tuple(names))
    return out, SimpleMap(tuple(origin), paths)


def to_simple(model: Model) -> Model:
    return to_simple_with_map(model)[0]


def is_simple(model: Model) -> bool:
    """Every state has at most two actions, and two-action states have Dirac rows."""
    for s in range(model.n):
        k = len(model.actions[s])
        if k > 2 or (k == 2 and not all(_is_dirac(r) for r in model.transitions[s])):
            return False
    return True


def leaf_distribution(smap: SimpleMap, z, by_obs: Mapping) -> dict[str, float]:
    """Distribution over original actions under original observation ``z``
    implied by per-observation branch distributions on the simple model."""
    out = {}
    for a, trail in smap.paths[z].items():
        p = 1.0
        for zz, b in trail:
            p *= by_obs[zz].get(b, 0.0)
        out[a] = p
    tot = sum(out.values())
    if abs(tot - 1.0) > 1e-6:
        raise ModelError(f"branch probabilities under {z!r} sum to {tot}")
    return {a: p / tot for a, p in out.items()}


__all__ = ["induced_mc", "expand_observations", "expansion_origin", "fsc_product",
           "fsc_from_product_policy", "product_policy_from_fsc", "product_action",
           "product_obs", "to_simple", "to_simple_with_map", "SimpleMap", "is_simple",
           "leaf_distribution"]
