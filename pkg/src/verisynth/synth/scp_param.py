"""Sequential convex programming for affine parametric MDPs.

The requirement is read universally over the scheduler: ``>=`` asks the
minimal value over policies to clear the threshold, ``<=`` the maximal one.
Every candidate produced by the linearized LP is model checked on the
instantiated MDP and accepted only when the checked value strictly improves.
"""
from __future__ import annotations

import time

import numpy as np

from ..checker import graph
from ..checker.mdp import check_spec
from ..models.core import ModelError, Spec
from ..optim.lp import LinearProgram, solve_lp
from ..optim.scp import ScpConfig, bilinear_coeffs, scp_step, trust_bounds
from .parametric import ParametricModel
from .report import SynthReport


def _universal(spec: Spec) -> Spec:
    """Policy sense that certifies the requirement for every policy."""
    return Spec(spec.kind, spec.targets, spec.direction, spec.threshold, spec.nature)


def certify_instantiation(pm: ParametricModel, spec: Spec, val: dict):
    return check_spec(pm.instantiate(val), _universal(spec))


def _build_lp(pm: ParametricModel, spec: Spec, cfg: ScpConfig, v_hat: dict, x_hat: np.ndarray,
              free: np.ndarray, t: np.ndarray, delta: float):
    lower = spec.direction == ">="  # x_s - k_s <= rhs (maximize) vs x_s + k_s >= rhs
    reach = spec.kind == "reach"
    lp = LinearProgram(sense="max" if lower else "min")
    pv = {}
    for v in pm.param_names:
        lo, hi = pm.params[v]
        a, b = trust_bounds(v_hat[v], delta, lo, hi)
        pv[v] = lp.add_var(v, a, b)
    xv, kv = {}, {}
    mu = dict(pm.initial)
    for s in np.nonzero(free)[0]:
        if x_hat[s] > 0:
            a, b = trust_bounds(x_hat[s], delta, 0.0, 1.0 if reach else np.inf)
        else:
            a, b = 0.0, delta  # zero center: additive box
        xv[s] = lp.add_var(f"x{s}", a, b, obj=mu.get(s, 0.0))
        kv[s] = lp.add_var(f"k{s}", 0.0, obj=-cfg.tau if lower else cfg.tau)
    # graph preservation on every parametric entry
    seen = set()
    for rows in pm.transitions:
        for row in rows:
            for _, poly in row:
                key = tuple(sorted(poly.terms.items()))
                if not poly.params or key in seen:
                    continue
                seen.add(key)
                lp.add_constraint({pv[v]: poly.linear(v) for v in poly.params}, ">=",
                                  cfg.eps_graph - poly.constant)
    for s, js in xv.items():
        for i, row in enumerate(pm.transitions[s]):
            coeffs = {js: 1.0, kv[s]: -1.0 if lower else 1.0}
            rhs = pm.rewards[s][i] if (pm.rewards is not None and not reach) else 0.0
            for u, poly in row:
                c = poly.constant
                if u in xv:
                    coeffs[xv[u]] = coeffs.get(xv[u], 0.0) - c
                    for v in poly.params:
                        d = poly.linear(v)
                        ay, az, k0 = bilinear_coeffs(v_hat[v], x_hat[u])
                        # d * v * x_u ~ d * (x_hat_u * v + v_hat * x_u - v_hat * x_hat_u)
                        coeffs[pv[v]] = coeffs.get(pv[v], 0.0) - d * ay
                        coeffs[xv[u]] = coeffs.get(xv[u], 0.0) - d * az
                        rhs += d * k0
                elif reach and t[u]:
                    rhs += c
                    for v in poly.params:
                        coeffs[pv[v]] = coeffs.get(pv[v], 0.0) - poly.linear(v)
            lp.add_constraint(coeffs, "<=" if lower else ">=", rhs)
    return lp, pv


def scp_param_synthesis(pm: ParametricModel, spec: Spec, cfg: ScpConfig | None = None,
                        init: dict | None = None) -> SynthReport:
    cfg = cfg or ScpConfig()
    t_start = time.perf_counter()
    spec.check_states(pm.n)
    maximize = spec.direction == ">="
    v_hat = dict(init) if init is not None else pm.midpoint
    res = certify_instantiation(pm, spec, v_hat)
    beta_hat = res.init_value
    log = [{"iteration": 0, "value": beta_hat, "delta": cfg.delta0, "accepted": True,
            "instantiation": dict(v_hat)}]

    def report(status, it, delta):
        return SynthReport(status, beta_hat, dict(v_hat), None, it, log, delta,
                           time.perf_counter() - t_start,
                           {"satisfied": spec.holds(beta_hat)})

    if not pm.params:
        return report("satisfied" if spec.holds(beta_hat) in (True, None) else "violated", 0,
                      cfg.delta0)
    if not pm.is_affine:
        raise ModelError("SCP synthesis needs affine transition entries")
    if cfg.stop_on_satisfied and spec.holds(beta_hat):
        return report("satisfied", 0, cfg.delta0)

    gm = pm.graph_model()
    t = graph.targets_mask(gm, spec.targets)
    if spec.kind == "reach":
        zero = graph.prob0E(gm, spec.targets) if maximize else graph.prob0A(gm, spec.targets)
        free = ~t & ~zero
    else:
        free = ~t & np.isfinite(res.values)
    x_hat = res.values.copy()
    delta = cfg.delta0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        lp, pv = _build_lp(pm, spec, cfg, v_hat, x_hat, free, t, delta)
        sol = solve_lp(lp)
        if not sol.ok:
            raise ModelError(f"internal error: linearized SCP program is {sol.status}")
        cand = {v: float(sol.x[j]) for v, j in pv.items()}
        try:
            cres = certify_instantiation(pm, spec, cand)
            beta = cres.init_value
        except ModelError:
            beta = -np.inf if maximize else np.inf
            cres = None
        step = scp_step(beta, beta_hat, delta, cfg.gamma, maximize)
        log.append({"iteration": it, "value": float(beta), "delta": step.delta,
                    "accepted": step.accept, "instantiation": cand})
        delta = step.delta
        if step.accept:
            v_hat, beta_hat, x_hat = cand, beta, cres.values.copy()
            if cfg.stop_on_satisfied and spec.holds(beta_hat):
                return report("satisfied", it, delta)
        if delta < cfg.omega:
            status = "satisfied" if spec.holds(beta_hat) else (
                "converged" if spec.threshold is None else "no-improvement")
            return report(status, it, delta)
    return report("max-iterations", it, delta)
