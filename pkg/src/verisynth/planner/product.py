"""MDP x DFA products, task-policy synthesis and statistical risk."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..checker.mdp import chain_reach, max_reach_mdp
from ..models.core import Model, ModelError, Policy
from ..models.dfa import Dfa
from ..models.labels import BeliefLabeling
from ..synth.scenario import n_threads

_MAX_PROPS = 16


@dataclass(frozen=True)
class ProductState:
    state: int
    dfa_state: int
    accepting: bool = False


def _codes(labels: Sequence[frozenset], props: Sequence[str]) -> np.ndarray:
    return np.array([sum(1 << j for j, p in enumerate(props) if p in lab) for lab in labels],
                    dtype=np.int64)


class TaskProduct:
    """Product of an MDP with a DFA that reads the label of every entered state.

    Product state ``(s, q)`` has index ``s * n_q + q``; all ``|S| x |Q|`` pairs
    are present so that a product policy stays defined when the labeling changes.
    """

    def __init__(self, mdp: Model, dfa: Dfa):
        if mdp.has_intervals:
            raise ModelError("task planning needs a point-probability MDP")
        if len(dfa.props) > _MAX_PROPS:
            raise ModelError(f"DFA with more than {_MAX_PROPS} propositions")
        self.mdp, self.dfa = mdp, dfa
        self.n_q = dfa.n_states
        self.n = mdp.n * self.n_q
        codes = range(1 << len(dfa.props))
        self.step_tab = np.array(
            [[dfa.step(q, {p for j, p in enumerate(dfa.props) if c >> j & 1}) for c in codes]
             for q in range(self.n_q)], dtype=np.int64)
        self.accepting = np.zeros(self.n_q, dtype=bool)
        self.accepting[list(dfa.accepting)] = True
        self.targets = frozenset(int(i) for i in np.nonzero(np.tile(self.accepting, mdp.n))[0])
        self._rows = [[[(t, e.p) for t, e in row] for row in rows] for rows in mdp.transitions]

    def index(self, s: int, q: int) -> int:
        return s * self.n_q + q

    def split(self, x: int) -> ProductState:
        s, q = divmod(int(x), self.n_q)
        return ProductState(s, q, bool(self.accepting[q]))

    def codes(self, labels: Sequence[frozenset]) -> np.ndarray:
        if len(labels) != self.mdp.n:
            raise ModelError("labeling does not cover every MDP state")
        return _codes(labels, self.dfa.props)

    def initial(self, labels: Sequence[frozenset], s: int | None = None) -> ProductState:
        s = self.mdp.initial_state if s is None else s
        q = self.dfa.step(self.dfa.init, labels[s])
        return ProductState(s, q, bool(self.accepting[q]))

    def model(self, labels: Sequence[frozenset], start: ProductState | None = None) -> Model:
        code = self.codes(labels)
        start = start or self.initial(labels)
        acts, trans = [], []
        for s in range(self.mdp.n):
            for q in range(self.n_q):
                acts.append(self.mdp.actions[s])
                trans.append(tuple(
                    tuple((t * self.n_q + int(self.step_tab[q, code[t]]), e) for t, e in row)
                    for row in self.mdp.transitions[s]))
        return Model(actions=tuple(acts), transitions=tuple(trans),
                     initial=((self.index(start.state, start.dfa_state), 1.0),), kind="mdp")

    def reachable_chain(self, choice: np.ndarray, code: np.ndarray, x0: int):
        """Dense chain induced by ``choice`` on the product states reachable from
        ``x0``; accepting states are made absorbing.  Returns (states, P)."""
        order, pos, edges = [x0], {x0: 0}, []
        i = 0
        while i < len(order):
            s, q = divmod(order[i], self.n_q)
            if not self.accepting[q]:
                for t, p in self._rows[s][choice[order[i]]]:
                    y = t * self.n_q + int(self.step_tab[q, code[t]])
                    if y not in pos:
                        pos[y] = len(order)
                        order.append(y)
                    edges.append((i, pos[y], p))
            i += 1
        P = np.zeros((len(order), len(order)))
        for a, b, p in edges:
            P[a, b] += p
        for a, x in enumerate(order):
            if self.accepting[x % self.n_q]:
                P[a, a] = 1.0
        return np.array(order), P


@dataclass
class TaskPolicy:
    policy: Policy
    value: float
    values: np.ndarray
    choice: np.ndarray
    start: ProductState
    product: TaskProduct = field(repr=False)

    def action(self, ps: ProductState) -> str:
        x = self.product.index(ps.state, ps.dfa_state)
        return self.product.mdp.actions[ps.state][int(self.choice[x])]


def synthesize_task_policy(mdp: Model, dfa: Dfa, labels: Sequence[frozenset],
                           start: ProductState | None = None,
                           product: TaskProduct | None = None) -> TaskPolicy:
    """Deterministic memoryless product policy maximizing the probability of
    reaching an accepting DFA state under the labeling ``labels``."""
    prod = product or TaskProduct(mdp, dfa)
    start = start or prod.initial(labels)
    pm = prod.model(labels, start)
    res = max_reach_mdp(pm, prod.targets)
    choice = np.array([mdp.action_index(x // prod.n_q, next(iter(res.policy.dist(x))))
                       for x in range(prod.n)], dtype=np.int64)
    x0 = prod.index(start.state, start.dfa_state)
    return TaskPolicy(res.policy, float(res.values[x0]), res.values, choice, start, prod)


def hoeffding_bound(N: int, eps: float) -> float:
    """P(|empirical mean - expectation| >= eps) <= 2 exp(-2 N eps^2)."""
    if N < 1 or eps < 0:
        raise ValueError("need N >= 1 and eps >= 0")
    return min(1.0, 2.0 * math.exp(-2.0 * N * eps * eps))


@dataclass
class RiskReport:
    risk: float
    empirical_mean: float
    map_value: float
    N: int
    eps: float
    hoeffding: float
    samples: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"risk": self.risk, "empirical_mean": self.empirical_mean,
                "map_value": self.map_value, "N": self.N, "eps": self.eps,
                "hoeffding": self.hoeffding}


def labeling_value(plan: TaskPolicy, labels_or_code, start: ProductState | None = None) -> float:
    """Exact probability of acceptance of the plan's product chain under a labeling."""
    prod = plan.product
    code = labels_or_code if isinstance(labels_or_code, np.ndarray) else prod.codes(labels_or_code)
    start = start or plan.start
    states, P = prod.reachable_chain(plan.choice, code, prod.index(start.state, start.dfa_state))
    x = chain_reach(P, prod.accepting[states % prod.n_q])
    return float(x[0])


def statistical_risk(mdp: Model, dfa: Dfa, plan: TaskPolicy, belief: BeliefLabeling, N: int,
                     seed=0, eps: float = 0.05, start: ProductState | None = None,
                     map_labels: Sequence[frozenset] | None = None) -> RiskReport:
    """Risk |Pr(accept | MAP labeling) - E_belief[Pr(accept)]| of a task policy,
    the expectation replaced by an N-sample empirical mean of exact chain solves."""
    if N < 1:
        raise ValueError("statistical risk needs N >= 1 samples")
    prod = plan.product
    if prod.mdp.n != mdp.n:
        raise ModelError("plan was synthesized for a different MDP")
    start = start or plan.start
    cols = [belief.props.index(p) if p in belief.props else -1 for p in dfa.props]
    probs = np.stack([belief.probs[:, j] if j >= 0 else np.zeros(belief.n_states) for j in cols],
                     axis=1) if cols else np.zeros((belief.n_states, 0))
    rng = np.random.default_rng(seed)
    draws = rng.random((N,) + probs.shape) < probs
    weights = 1 << np.arange(len(cols), dtype=np.int64)
    codes = (draws * weights).sum(axis=2)
    cache: dict[bytes, float] = {}
    keys = [c.tobytes() for c in codes]
    todo = {k: c for k, c in zip(keys, codes)}

    def job(item):
        return item[0], labeling_value(plan, item[1], start)

    items = list(todo.items())
    workers = min(n_threads(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cache.update(ex.map(job, items))
    else:
        cache.update(map(job, items))
    f = np.array([cache[k] for k in keys])
    if map_labels is None:
        map_code = ((probs >= 0.5) * weights).sum(axis=1)
    else:
        map_code = prod.codes(map_labels)
    fmap = labeling_value(plan, map_code, start)
    mean = float(f.mean())
    return RiskReport(abs(fmap - mean), mean, fmap, N, eps, hoeffding_bound(N, eps), f)
