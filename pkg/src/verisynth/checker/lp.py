"""LP formulations: primal reachability / expected cost and the dual
(occupancy-measure) program for policy synthesis."""
from __future__ import annotations

import time

import numpy as np

from ..models.core import Model, ModelError, Policy
from ..optim.lp import LinearProgram, solve_lp
from . import graph
from .mdp import _require_point


def reach_lp(model: Model, t: np.ndarray, maximize: bool):
    """Primal LP: least (greatest) solution of p >= P p (p <= P p)."""
    T = np.nonzero(t)[0].tolist()
    zero = graph.prob0A(model, T) if maximize else graph.prob0E(model, T)
    x = t.astype(float)
    maybe = ~t & ~zero
    idx = {}
    lp = LinearProgram(sense="min" if maximize else "max")
    for s in np.nonzero(maybe)[0]:
        idx[s] = lp.add_var(f"p{s}", 0.0, 1.0, obj=1.0)
    rel = ">=" if maximize else "<="
    for s in idx:
        for row in model.transitions[s]:
            coeffs = {idx[s]: 1.0}
            rhs = 0.0
            for u, e in row:
                if u in idx:
                    coeffs[idx[u]] = coeffs.get(idx[u], 0.0) - e.p
                elif t[u]:
                    rhs += e.p
            lp.add_constraint(coeffs, rel, rhs)
    if idx:
        res = solve_lp(lp)
        if not res.ok:
            raise ModelError(f"reachability LP is {res.status}")
        for s, j in idx.items():
            x[s] = res.x[j]
        return x, res.iterations
    return x, 0


def cost_lp(model: Model, g: np.ndarray, inf: np.ndarray, enabled, maximize: bool):
    r = model.choice_rewards()
    _, first, *_ = model.choice_arrays()
    free = ~g & ~inf
    lp = LinearProgram(sense="min" if maximize else "max")
    idx = {s: lp.add_var(f"p{s}", 0.0, obj=1.0) for s in np.nonzero(free)[0]}
    rel = ">=" if maximize else "<="
    for s in idx:
        for i, row in enumerate(model.transitions[s]):
            c = first[s] + i
            if enabled is not None and not enabled[c]:
                continue
            coeffs = {idx[s]: 1.0}
            for u, e in row:
                if u in idx:
                    coeffs[idx[u]] = coeffs.get(idx[u], 0.0) - e.p
            lp.add_constraint(coeffs, rel, float(r[c]))
    x = np.where(inf, np.inf, 0.0)
    if idx:
        res = solve_lp(lp)
        if not res.ok:
            raise ModelError(f"expected-cost LP is {res.status}")
        for s, j in idx.items():
            x[s] = res.x[j]
        return x, res.iterations
    return x, 0


def dual_lp_synthesize(model: Model, T, beta: float = 0.0) -> dict:
    """Occupancy-measure LP for maximal reachability.

    Returns the randomized policy ``x(s,a)/sum_a x(s,a)``, the occupancy
    measure, and the achieved objective.  A second LP minimizes the total
    expected number of steps among optimal occupancies, which removes
    circulation inside end components (otherwise the extracted policy could
    stay in such a component forever).
    """
    t0 = time.perf_counter()
    _require_point(model)
    t = graph.targets_mask(model, T)
    zero = graph.prob0A(model, T)
    maybe = ~t & ~zero
    mu = model.init_vector
    base = float(mu[t].sum())

    def build():
        lp = LinearProgram(sense="max")
        var = {}
        for s in np.nonzero(maybe)[0]:
            for i, a in enumerate(model.actions[s]):
                var[(s, i)] = lp.add_var(f"x{s}_{a}", 0.0)
        flow_in = {s: {} for s in np.nonzero(maybe)[0]}
        goal = {}
        for (s, i), j in var.items():
            flow_in[s][j] = flow_in[s].get(j, 0.0) + 1.0
            for u, e in model.transitions[s][i]:
                if maybe[u]:
                    flow_in[u][j] = flow_in[u].get(j, 0.0) - e.p
                elif t[u]:
                    goal[j] = goal.get(j, 0.0) + e.p
        for s, row in flow_in.items():
            lp.add_constraint(row, "=", float(mu[s]), f"flow{s}")
        return lp, var, goal

    lp, var, goal = build()
    for j, c in goal.items():
        lp.set_obj(j, c)
    if beta - base > 0:
        lp.add_constraint(goal, ">=", beta - base, "beta")
    res = solve_lp(lp)
    if res.status == "infeasible":
        raise ModelError(f"dual LP infeasible: maximal reachability is below beta={beta}")
    if not res.ok:
        raise ModelError(f"dual LP is {res.status}")
    best = res.objective
    lp2, var2, goal2 = build()
    lp2.sense = "min"
    for j in var2.values():
        lp2.set_obj(j, 1.0)
    lp2.add_constraint(goal2, ">=", best - 1e-10 * max(1.0, abs(best)), "opt")
    res2 = solve_lp(lp2)
    x = res2.x if res2.ok else res.x
    occ = {(int(s), model.actions[s][i]): float(x[j]) for (s, i), j in var.items()}
    choice = {}
    for s in range(model.n):
        tot = sum(occ.get((s, a), 0.0) for a in model.actions[s])
        if maybe[s] and tot > 1e-12:
            d = {a: occ[(s, a)] / tot for a in model.actions[s] if occ[(s, a)] > 1e-12}
            z = sum(d.values())
            choice[s] = {a: p / z for a, p in d.items()}
        else:
            choice[s] = {model.actions[s][0]: 1.0}
    objective = base + sum(c * x[j] for j, c in goal.items())
    return {"policy": Policy(choice), "occupancy": occ, "objective": float(objective),
            "iterations": res.iterations + res2.iterations, "time": time.perf_counter() - t0}
