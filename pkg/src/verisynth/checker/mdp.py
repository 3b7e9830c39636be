"""Reachability and expected-cost analysis of point-probability MDPs.

Values are computed by value iteration, then the extracted policy is
evaluated exactly with a linear solve and improved until no strict
improvement remains; the reported numbers are therefore exact values of a
deterministic memoryless policy, not just converged iterates.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.sparse import csr_matrix, diags, issparse
from scipy.sparse.linalg import spsolve

from ..models.core import Model, ModelError, Policy, Spec
from . import graph
from .result import CheckResult

VI_TOL = 1e-9
VI_MAX = 100_000
_DENSE_SOLVE = 600


# -- helpers ------------------------------------------------------------------

def _require_point(model: Model):
    if model.has_intervals:
        raise ModelError("model has interval entries; use robust_value")


def _best_per_state(model: Model, q: np.ndarray, maximize: bool) -> np.ndarray:
    _, first, *_ = model.choice_arrays()
    red = np.maximum if maximize else np.minimum
    return red.reduceat(q, first[:-1])


def _mask_choices(model: Model, q: np.ndarray, enabled: np.ndarray | None, maximize: bool):
    if enabled is None:
        return q
    return np.where(enabled, q, -np.inf if maximize else np.inf)


def value_iteration(model: Model, x0: np.ndarray, fixed: np.ndarray, maximize: bool,
                    rewards: np.ndarray | None = None, enabled: np.ndarray | None = None,
                    tol: float = VI_TOL, max_iter: int = VI_MAX):
    """Jacobi iteration of the Bellman operator; states in ``fixed`` keep ``x0``."""
    P = model.point_matrix()
    x = x0.copy()
    free = ~fixed
    for it in range(1, max_iter + 1):
        q = P @ x
        if rewards is not None:
            q = q + rewards
        q = _mask_choices(model, q, enabled, maximize)
        y = _best_per_state(model, q, maximize)
        y = np.where(free, y, x)
        diff = float(np.max(np.abs(y - x), initial=0.0))
        x = y
        if diff < tol:
            return x, it
    return x, max_iter


def policy_matrix(model: Model, choice: np.ndarray):
    """Rows of the point matrix selected per state (``choice`` = global choice index)."""
    return model.point_matrix()[choice]


def randomized_matrix(model: Model, policy: Policy, default_first: bool = True):
    """(P_sigma, r_sigma) for a randomized memoryless policy on a point model."""
    st, first, *_ = model.choice_arrays()
    rows, cols, w = [], [], []
    for s in range(model.n):
        d = policy.choice.get(s)
        if d is None:
            if len(model.actions[s]) > 1 and not default_first:
                raise ModelError(f"policy undefined at state {s}")
            d = {model.actions[s][0]: 1.0}
        for a, p in d.items():
            if p > 0:
                rows.append(s)
                cols.append(first[s] + model.action_index(s, a))
                w.append(p)
    W = csr_matrix((w, (rows, cols)), shape=(model.n, len(st)))
    P = model.point_matrix()
    if not issparse(P):
        W = W.toarray()
    return W @ P, W @ model.choice_rewards()


def _leak(rows_sum: np.ndarray) -> np.ndarray:
    """Mass lost by substochastic rows; rounding noise counts as stochastic."""
    leak = 1.0 - rows_sum
    return np.where(np.abs(leak) < 1e-9, 0.0, leak)


def gth_solve(Q: np.ndarray, exit_mass: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``out_s x_s = sum_{t != s} Q[s, t] x_t + rhs_s`` with
    ``out_s = sum_{t != s} Q[s, t] + exit_mass[s]``.

    Elimination in the style of Grassmann, Taksar and Heyman: every pivot is
    re-summed from nonnegative outflows, so nearly closed chains lose no
    relative accuracy to cancellation.
    """
    Q = np.array(Q, dtype=float)
    np.fill_diagonal(Q, 0.0)
    e = np.array(exit_mass, dtype=float)
    c = np.array(rhs, dtype=float)
    n = len(e)
    out = np.zeros(n)
    rows = []
    for k in range(n - 1, -1, -1):
        live = slice(0, k)
        out[k] = Q[k, :k].sum() + e[k]
        if not out[k] > 0:
            raise ModelError("singular chain system (policy does not leave a closed set)")
        rows.append((k, Q[k, :k].copy(), c[k]))
        w = Q[live, k] / out[k]
        Q[live, live] += np.outer(w, Q[k, :k])
        e[live] += w * e[k]
        c[live] += w * c[k]
        Q[np.arange(k), np.arange(k)] = 0.0
    x = np.zeros(n)
    for k, q, ck in reversed(rows):
        x[k] = (q @ x[:k] + ck) / out[k]
    return x


def solve_chain(P, b: np.ndarray, free: np.ndarray, x_fixed: np.ndarray) -> np.ndarray:
    """Solve x = P x + b on ``free`` states with the remaining entries given.

    Dense systems use :func:`gth_solve`; large sparse ones assemble the
    diagonal of ``I - P`` from each state's outflow before a sparse LU.
    """
    x = x_fixed.copy()
    idx = np.nonzero(free)[0]
    if idx.size == 0:
        return x
    rest = np.nonzero(~free)[0]
    if issparse(P) and idx.size > _DENSE_SOLVE:
        P = csr_matrix(P)
        rows = P[idx]
        leak = _leak(np.asarray(rows.sum(axis=1)).ravel())
        coo = rows.tocoo()
        off = coo.col != idx[coo.row]
        out = np.bincount(coo.row[off], weights=coo.data[off], minlength=idx.size) + leak
        Pff = rows[:, idx].tolil()
        Pff.setdiag(0.0)
        A = (diags(out) - Pff.tocsr()).tocsc()
        x[idx] = spsolve(A, b[idx] + rows[:, rest] @ x_fixed[rest])
        return x
    P = P.toarray() if issparse(P) else np.asarray(P)
    rows = P[idx]
    Q = rows[:, idx]
    ext = rows[:, rest]
    exit_mass = ext.sum(axis=1) + _leak(rows.sum(axis=1))
    x[idx] = gth_solve(Q, exit_mass, b[idx] + ext @ x_fixed[rest])
    return x


def _chain_backward(P, start: np.ndarray, through: np.ndarray | None = None) -> np.ndarray:
    if not issparse(P):
        adj = np.asarray(P) > 0
        seen = start.copy()
        ok = np.ones(len(start), dtype=bool) if through is None else through
        while True:
            nxt = seen | (adj[:, seen].any(axis=1) & ok)
            if np.array_equal(nxt, seen):
                return seen
            seen = nxt
    Pt = csr_matrix(P).T.tocsr()
    seen = start.copy()
    todo = list(np.nonzero(start)[0])
    while todo:
        t = todo.pop()
        for s in Pt.indices[Pt.indptr[t]:Pt.indptr[t + 1]]:
            if not seen[s] and (through is None or through[s]):
                seen[s] = True
                todo.append(s)
    return seen


def chain_reach(P, t: np.ndarray) -> np.ndarray:
    """Exact reachability probabilities of a (sub)stochastic chain."""
    can = _chain_backward(P, t)
    free = can & ~t
    x0 = t.astype(float)
    return solve_chain(P, np.zeros(len(t)), free, x0)


def chain_cost(P, r: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Exact expected cost until ``g``; ``inf`` where ``g`` is missed with positive probability."""
    can = _chain_backward(P, g)
    inf = _chain_backward(P, ~can, through=~g)
    free = ~g & ~inf
    x = solve_chain(P, r, free, np.zeros(len(g)))
    x[inf] = np.inf
    return x


def _q_values(model: Model, x: np.ndarray, rewards: np.ndarray | None):
    xf = np.where(np.isinf(x), 0.0, x)
    q = model.point_matrix() @ xf
    if np.isinf(x).any():
        bad = model.point_matrix() @ np.isinf(x).astype(float) > 0
        q = np.where(bad, np.inf, q)
    if rewards is not None:
        q = q + rewards
    return q


def attractor_choice(model: Model, q: np.ndarray, v: np.ndarray, seed: np.ndarray,
                     maximize: bool, enabled: np.ndarray | None = None,
                     tol: float = 1e-6) -> np.ndarray:
    """Optimal choices that make progress towards ``seed``.

    A state is resolved once it picks a (near-)optimal action with a successor
    already resolved; this excludes optimal-looking actions that merely
    circulate inside an end component.
    """
    st, first, succ, _, _, ptr = model.choice_arrays()
    n = model.n
    scale = np.maximum(1.0, np.abs(np.where(np.isinf(v), 0.0, v)))
    vs = v[st]
    good = (q >= vs - tol * scale[st]) if maximize else (q <= vs + tol * scale[st])
    good |= np.isinf(vs) & np.isinf(q)
    if enabled is not None:
        good &= enabled
    choice = np.full(n, -1, dtype=np.int64)
    resolved = seed.copy()
    for s in np.nonzero(seed)[0]:
        choice[s] = first[s]
    while True:
        cand = good & np.maximum.reduceat(resolved[succ].astype(np.int8), ptr[:-1]).astype(bool)
        cand &= ~resolved[st]
        if not cand.any():
            break
        for c in np.nonzero(cand)[0]:
            s = st[c]
            if not resolved[s]:
                resolved[s] = True
                choice[s] = c
    for s in np.nonzero(~resolved)[0]:
        lo, hi = first[s], first[s + 1]
        qs = q[lo:hi] if enabled is None else np.where(enabled[lo:hi], q[lo:hi],
                                                       -np.inf if maximize else np.inf)
        choice[s] = lo + int(np.argmax(qs) if maximize else np.argmin(qs))
    return choice


def _evaluate(model: Model, choice: np.ndarray, objective: str, t: np.ndarray,
              rewards: np.ndarray | None):
    P = policy_matrix(model, choice)
    if objective == "reach":
        return chain_reach(P, t)
    return chain_cost(P, rewards[choice], t)


def _improve(model, choice, objective, t, rewards, maximize, enabled=None, max_rounds=1000):
    """Policy iteration with strict improvements only."""
    st, first, *_ = model.choice_arrays()
    x = _evaluate(model, choice, objective, t, rewards)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        q = _q_values(model, x, rewards if objective == "cost" else None)
        q = _mask_choices(model, q, enabled, maximize)
        cur = q[choice]
        best = _best_per_state(model, q, maximize)
        scale = np.maximum(1.0, np.abs(np.where(np.isinf(cur), 0.0, cur)))
        with np.errstate(invalid="ignore"):
            gain = (best - cur) if maximize else (cur - best)
        gain = np.where(np.isnan(gain), 0.0, gain)
        switch = (gain > 1e-12 * scale) & ~t
        if not switch.any():
            break
        new = choice.copy()
        for s in np.nonzero(switch)[0]:
            lo, hi = first[s], first[s + 1]
            seg = q[lo:hi]
            new[s] = lo + int(np.argmax(seg) if maximize else np.argmin(seg))
        try:
            y = _evaluate(model, new, objective, t, rewards)
        except ModelError:
            break
        worse = (y < x - 1e-12) if maximize else (y > x + 1e-12)
        if worse.any():
            break
        choice, x = new, y
    return choice, x, rounds


def choice_to_policy(model: Model, choice: np.ndarray) -> Policy:
    st, first, *_ = model.choice_arrays()
    return Policy.deterministic({s: model.actions[s][int(choice[s] - first[s])]
                                 for s in range(model.n)})


def _finish(model, x, method, it, t0, spec_like, policy=None, stats=None):
    init = float(np.dot(model.init_vector, np.where(np.isinf(x), 0.0, x)))
    if np.isinf(x[model.init_vector > 0]).any():
        init = float("inf")
    sat = spec_like.holds(init) if spec_like is not None else None
    return CheckResult(x, init, sat, method, it, time.perf_counter() - t0, policy, stats or {})


# -- reachability --------------------------------------------------------------------

def reach_mdp(model: Model, T, maximize: bool = True, spec: Spec | None = None,
              method: str = "vi") -> CheckResult:
    t0 = time.perf_counter()
    _require_point(model)
    t = graph.targets_mask(model, T)
    if method == "lp":
        from .lp import reach_lp
        x, it = reach_lp(model, t, maximize)
        return _finish(model, x, "lp-primal", it, t0, spec)
    st, first, *_ = model.choice_arrays()
    if len(st) == model.n:  # a chain: one exact solve
        x = chain_reach(model.point_matrix(), t)
        return _finish(model, x, "vi", 0, t0, spec, choice_to_policy(model, first[:-1].copy()))
    zero = graph.prob0A(model, T) if maximize else graph.prob0E(model, T)
    x0 = t.astype(float)
    x, it = value_iteration(model, x0, t | zero, maximize)
    q = _q_values(model, x, None)
    choice = attractor_choice(model, q, x, t | zero, maximize, tol=1e-6 if maximize else 0.0)
    if not maximize:
        # inside the avoiding set, stay inside it
        st, first, *_ = model.choice_arrays()
        stay = graph._choice_all(model, zero)
        for s in np.nonzero(zero)[0]:
            choice[s] = first[s] + int(np.argmax(stay[first[s]:first[s + 1]]))
    choice, x, rounds = _improve(model, choice, "reach", t, None, maximize)
    x[t] = 1.0
    return _finish(model, x, "vi", it, t0, spec, choice_to_policy(model, choice),
                   {"pi_rounds": rounds})


def max_reach_mdp(model: Model, T, spec: Spec | None = None, method: str = "vi") -> CheckResult:
    return reach_mdp(model, T, True, spec, method)


def min_reach_mdp(model: Model, T, spec: Spec | None = None, method: str = "vi") -> CheckResult:
    return reach_mdp(model, T, False, spec, method)


# -- expected cost -----------------------------------------------------------------------

def cost_preprocess(model: Model, G, maximize: bool):
    """Dead-end validation; returns (goal mask, infinite mask, enabled choices)."""
    g = graph.targets_mask(model, G)
    st, _, succ, _, _, ptr = model.choice_arrays()
    reach = np.zeros(model.n, dtype=bool)
    reach[list(model.reachable())] = True
    if maximize:
        ok = graph.prob1A(model, G)
        bad = reach & ~ok
        if bad.any():
            raise ModelError(f"dead-end: states {sorted(np.nonzero(bad)[0].tolist())[:10]} miss the "
                             "goal set with positive probability under some policy")
        return g, ~ok, None
    ok = graph.prob1E(model, G)
    init = model.init_vector > 0
    if (init & ~ok).any():
        raise ModelError("dead-end: the goal set cannot be reached almost surely from the initial state")
    enabled = np.minimum.reduceat(ok[succ].astype(np.int8), ptr[:-1]).astype(bool)
    return g, ~ok, enabled


def expected_cost_mdp(model: Model, G, optimize: str = "min", spec: Spec | None = None,
                      method: str = "vi") -> CheckResult:
    t0 = time.perf_counter()
    _require_point(model)
    if model.rewards is None:
        raise ModelError("expected-cost query on a model without costs")
    maximize = optimize == "max"
    g, inf, enabled = cost_preprocess(model, G, maximize)
    if method == "lp":
        from .lp import cost_lp
        x, it = cost_lp(model, g, inf, enabled, maximize)
        return _finish(model, x, "lp-primal", it, t0, spec)
    r = model.choice_rewards()
    fixed = g | inf
    if maximize:
        xs, it = value_iteration(model, np.zeros(model.n), fixed, True, r)
        xs[inf] = np.inf
        q = _q_values(model, xs, r)
        choice = attractor_choice(model, q, xs, fixed, True, tol=0.0)
    else:
        # start from a proper policy so that zero-cost cycles cannot hide the goal
        q0 = np.where(enabled, 0.0, np.inf)
        proper = attractor_choice(model, q0, np.zeros(model.n), fixed, False, enabled)
        xp = _evaluate(model, proper, "cost", g, r)
        xp = np.where(inf, np.inf, xp)
        start = np.where(inf, 0.0, xp)
        xs, it = value_iteration(model, start, fixed, False, r, enabled)
        xs = np.where(inf, np.inf, xs)
        q = _q_values(model, xs, r)
        choice = attractor_choice(model, q, xs, fixed, False, enabled)
    choice, x, rounds = _improve(model, choice, "cost", g, r, maximize, enabled)
    x = np.where(inf, np.inf, x)
    x[g] = 0.0
    return _finish(model, x, "vi", it, t0, spec, choice_to_policy(model, choice),
                   {"pi_rounds": rounds})


# -- policies ------------------------------------------------------------------------------

def evaluate_policy(model: Model, policy: Policy, spec: Spec) -> CheckResult:
    """Exact value of a memoryless (possibly randomized) policy on a point model."""
    t0 = time.perf_counter()
    _require_point(model)
    t = graph.targets_mask(model, spec.targets)
    P, r = randomized_matrix(model, policy)
    x = chain_reach(P, t) if spec.kind == "reach" else chain_cost(P, r, t)
    return _finish(model, x, "vi", 0, t0, spec, policy)


def check_spec(model: Model, spec: Spec, method: str = "vi") -> CheckResult:
    spec.check_states(model.n)
    if spec.kind == "reach":
        return reach_mdp(model, spec.targets, spec.optimize == "max", spec, method)
    return expected_cost_mdp(model, spec.targets, spec.optimize, spec, method)
