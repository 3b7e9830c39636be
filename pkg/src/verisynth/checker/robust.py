"""Interval models: worst-case expectations and robust value iteration."""
from __future__ import annotations

import time
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix

from ..models.core import POINT_KIND, PROB_TOL, Fsc, Model, ModelError, Point, Policy, Spec
from ..models.transform import expand_observations, fsc_product, product_policy_from_fsc
from . import graph
from .mdp import (VI_MAX, VI_TOL, _finish, chain_cost, chain_reach, check_spec,
                  evaluate_policy)
from .result import CheckResult


POLICY_VI_CAP = 100


def worst_case_expectation(entries: Sequence, values, sense: str = "min") -> float:
    """Optimum of sum_j P_j v_j over lo <= P <= hi, sum P = 1.

    Greedy: every successor starts at its lower bound and the remaining mass
    goes to the successors in order of preference for ``sense``.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    succ = [t for t, _ in entries]
    lo = np.array([e.lo for _, e in entries], dtype=float)
    hi = np.array([e.hi for _, e in entries], dtype=float)
    v = np.array([values[t] for t in succ], dtype=float)
    budget = 1.0 - lo.sum()
    if budget < -PROB_TOL or hi.sum() < 1.0 - PROB_TOL:
        raise ModelError(f"infeasible interval budget (sum lo = {lo.sum()}, sum hi = {hi.sum()})")
    p = lo.copy()
    order = np.argsort(v if sense == "min" else -v, kind="stable")
    budget = max(budget, 0.0)
    for j in order:
        add = min(hi[j] - lo[j], budget)
        p[j] += add
        budget -= add
        if budget <= 0:
            break
    return float(np.dot(p, v))


class _Rows:
    """Vectorized greedy worst case over all choices of a model."""

    def __init__(self, model: Model):
        st, first, succ, lo, hi, ptr = model.choice_arrays()
        self.n_choices = len(st)
        self.succ, self.lo, self.cap, self.ptr = succ, lo, hi - lo, ptr
        self.len = np.diff(ptr)
        self.group = np.repeat(np.arange(self.n_choices), self.len)
        self.budget = np.maximum(1.0 - np.add.reduceat(lo, ptr[:-1]), 0.0)
        self.budget_rep = np.repeat(self.budget, self.len)
        self.matrix_shape = (self.n_choices, model.n)

    def probs(self, x: np.ndarray, sense: str) -> np.ndarray:
        """Worst-case distribution per entry given state values ``x``."""
        v = x[self.succ]
        key = v if sense == "min" else -v
        order = np.lexsort((key, self.group))
        cap = self.cap[order]
        csum = np.cumsum(cap)
        start = csum[self.ptr[:-1]] - cap[self.ptr[:-1]]
        before = csum - cap - np.repeat(start, self.len)
        add = np.clip(self.budget_rep - before, 0.0, cap)
        p = self.lo.copy()
        p[order] += add
        return p

    def matrix(self, p: np.ndarray):
        return csr_matrix((p, self.succ, self.ptr), shape=self.matrix_shape)

    def expect(self, x: np.ndarray, sense: str) -> np.ndarray:
        xf = np.where(np.isinf(x), 0.0, x)
        p = self.probs(xf, sense)
        return np.add.reduceat(p * xf[self.succ], self.ptr[:-1])


def _degenerate_to_point(model: Model) -> Model | None:
    if not model.has_intervals:
        return model
    rows = []
    for per_state in model.transitions:
        new_s = []
        for row in per_state:
            if any(e.is_interval and e.hi - e.lo > 0 for _, e in row):
                return None
            new_s.append(tuple((t, Point(e.lo)) for t, e in row))
        rows.append(tuple(new_s))
    return model.replace(transitions=tuple(rows),
                         kind=POINT_KIND.get(model.kind, model.kind))


def _policy_weights(model: Model, policy: Policy) -> csr_matrix:
    st, first, *_ = model.choice_arrays()
    r, c, w = [], [], []
    for s in range(model.n):
        d = policy.choice.get(s)
        if d is None:
            if len(model.actions[s]) > 1:
                reach = model.reachable()
                if s in reach:
                    raise ModelError(f"policy undefined at reachable state {s}")
            d = {model.actions[s][0]: 1.0}
        for a, p in d.items():
            if p > 0:
                r.append(s)
                c.append(first[s] + model.action_index(s, a))
                w.append(p)
    return csr_matrix((w, (r, c)), shape=(model.n, len(st)))


def robust_value(model: Model, spec: Spec, policy: Policy | None = None,
                 max_iter: int = VI_MAX, tol: float = VI_TOL) -> CheckResult:
    """Worst case over all instantiations of the intervals.

    Nature works against the requirement (minimizes for ``>=`` and maximizes
    for ``<=``); the agent follows ``policy`` or optimizes ``spec.optimize``.
    With a policy, the final value is certified by an exact evaluation of the
    chain induced by nature's greedy (vertex) response, refined until nature
    cannot do strictly worse.
    """
    t0 = time.perf_counter()
    spec.check_states(model.n)
    point = _degenerate_to_point(model)
    if point is not None:
        if policy is None:
            return check_spec(point, spec)
        return evaluate_policy(point, policy, spec)
    nature = spec.nature
    rows = _Rows(model)
    t = graph.targets_mask(model, spec.targets)
    st, first, *_ = model.choice_arrays()
    reach = spec.kind == "reach"
    r = model.choice_rewards()
    W = _policy_weights(model, policy) if policy is not None else None
    maximize = spec.optimize == "max"

    # qualitative preprocessing on the (instantiation-independent) graph
    if reach:
        if W is not None:
            gm = _support_model(model, W)
            zero = graph.prob0A(gm, spec.targets)
        else:
            zero = graph.prob0A(model, spec.targets) if maximize else graph.prob0E(model, spec.targets)
        inf = np.zeros(model.n, dtype=bool)
        if rows.lo.size and float(rows.lo.min()) > 0.0:
            # positive bounds fix the support, so almost-sure sets are graph facts
            if W is not None:
                one = graph.prob1A(gm, spec.targets)
            else:
                one = graph.prob1E(model, spec.targets) if maximize else graph.prob1A(model, spec.targets)
            t = t | one
    else:
        gm = _support_model(model, W) if W is not None else model
        need_all = W is not None or maximize
        ok = graph.prob1A(gm, spec.targets) if need_all else graph.prob1E(gm, spec.targets)
        check = np.zeros(model.n, dtype=bool)
        if need_all:
            check[list(gm.reachable())] = True
        else:
            check = model.init_vector > 0
        if (check & ~ok).any():
            raise ModelError("dead-end: the goal set is missed with positive probability")
        inf = ~ok
        zero = np.zeros(model.n, dtype=bool)
    fixed = t | zero | inf
    if W is not None:
        # warm start only: the exact certification below finishes the job
        max_iter = min(max_iter, POLICY_VI_CAP)
    x = np.where(t, 1.0, 0.0) if reach else np.zeros(model.n)
    x[inf] = 0.0
    red = np.maximum if maximize else np.minimum
    it = 0
    for it in range(1, max_iter + 1):
        q = rows.expect(x, nature)
        if not reach:
            q = q + r
        if W is not None:
            y = W @ q
        else:
            if not reach and not maximize:
                # actions that may leave the almost-sure region cost infinity
                leaves = (rows.matrix(np.ones_like(rows.lo)) @ inf.astype(float)) > 0
                q = np.where(leaves, np.inf, q)
            y = red.reduceat(q, first[:-1])
        y = np.where(fixed, x, y)
        diff = float(np.max(np.abs(y - x), initial=0.0))
        x = y
        if diff < tol:
            break
    else:
        if W is None:
            raise ModelError(f"robust value iteration did not converge in {max_iter} iterations")
    if W is not None:
        x = _certify(model, rows, W, x, t, r, reach, nature)
    x = np.where(inf, np.inf, x)
    return _finish(model, x, "robust-vi", it, t0, spec, policy)


def _support_model(model: Model, W) -> Model:
    """Model restricted to the actions in the support of a policy (graph only)."""
    W = csr_matrix(W)
    st, first, *_ = model.choice_arrays()
    acts, trans = [], []
    for s in range(model.n):
        cols = W.indices[W.indptr[s]:W.indptr[s + 1]]
        idx = sorted(int(c - first[s]) for c in cols) or [0]
        acts.append(tuple(model.actions[s][i] for i in idx))
        trans.append(tuple(model.transitions[s][i] for i in idx))
    return Model(actions=tuple(acts), transitions=tuple(trans), initial=model.initial,
                 labels=model.labels, kind="mdp")


def _certify(model, rows, W, x, t, r, reach, nature, max_rounds=100):
    """Exact value under a fixed policy via nature's policy iteration."""
    better = (lambda a, b: a < b - 1e-12) if nature == "min" else (lambda a, b: a > b + 1e-12)
    p = rows.probs(x, nature)
    best = None
    for _ in range(max_rounds):
        P = W @ rows.matrix(p)
        y = chain_reach(P, t) if reach else chain_cost(P, W @ r, t)
        if best is not None and not better(y, best).any():
            break
        best = y
        p = rows.probs(np.where(np.isinf(y), 0.0, y), nature)
    else:
        raise ModelError(f"robust policy evaluation did not stabilize in {max_rounds} rounds")
    return best


def induced_interval_chain(model: Model, policy: Policy) -> Model:
    """Deterministic policy on an interval model: its (interval) induced chain."""
    from ..models.transform import induced_mc
    return induced_mc(model, policy)


# -- finite-state controllers -------------------------------------------------------------

def lift_targets(model: Model, targets, k: int) -> frozenset:
    from ..models.transform import expansion_origin
    origin = expansion_origin(model)
    return frozenset(s * k + n for s, o in enumerate(origin) if o in targets for n in range(k))


def evaluate_fsc(model: Model, fsc: Fsc, spec: Spec) -> CheckResult:
    """Value of ``fsc`` on a (u)POMDP via the chain over states x nodes."""
    if model.obs is None:
        raise ModelError("observation mismatch: model has no observations")
    k = fsc.n_nodes
    fsc.check_compatible(expand_observations(model))
    prod = fsc_product(model, k)
    pol = product_policy_from_fsc(model, fsc)
    pspec = Spec(spec.kind, lift_targets(model, spec.targets, k), spec.direction,
                 spec.threshold, spec.optimize)
    if prod.has_intervals:
        res = robust_value(prod, pspec, pol)
    else:
        res = evaluate_policy(prod, pol, pspec)
    res.stats["product_states"] = prod.n
    return res


def vertex_instantiations(model: Model, limit: int = 1 << 16):
    """All instantiations that put every row at a vertex of its interval polytope
    (test oracle; exponential)."""
    import itertools

    per_row = []
    for s in range(model.n):
        for i, row in enumerate(model.transitions[s]):
            per_row.append(((s, i), row_vertices(row)))
    total = 1
    for _, vs in per_row:
        total *= len(vs)
        if total > limit:
            raise ModelError("too many vertex instantiations")
    for combo in itertools.product(*[vs for _, vs in per_row]):
        trans = [list(r) for r in model.transitions]
        for ((s, i), _), probs in zip(per_row, combo):
            trans[s][i] = tuple((t, Point(p)) for (t, _), p in zip(model.transitions[s][i], probs)
                                if p > 0)
        yield model.replace(transitions=tuple(tuple(r) for r in trans),
                            kind=POINT_KIND.get(model.kind, model.kind))


def row_vertices(row) -> list[tuple[float, ...]]:
    """Vertices of {lo <= p <= hi, sum p = 1}: all but one entry at a bound."""
    import itertools

    lo = [e.lo for _, e in row]
    hi = [e.hi for _, e in row]
    k = len(row)
    out = set()
    for free in range(k):
        others = [j for j in range(k) if j != free]
        for bits in itertools.product((0, 1), repeat=len(others)):
            p = [0.0] * k
            for j, b in zip(others, bits):
                p[j] = hi[j] if b else lo[j]
            rest = 1.0 - sum(p)
            if lo[free] - 1e-12 <= rest <= hi[free] + 1e-12:
                p[free] = min(max(rest, lo[free]), hi[free])
                out.add(tuple(round(v, 15) for v in p))
    return sorted(out)

