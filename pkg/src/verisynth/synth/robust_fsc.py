"""SCP synthesis of observation-based policies and FSCs on (uncertain) POMDPs.

Variables are the per-observation action probabilities ``sigma`` and the
per-state values ``r``.  Products ``sigma * r`` are linearized around the
incumbent; interval rows are replaced by nature's worst-case distribution at
the incumbent values (a supergradient cut of the concave worst-case map).
Candidates are certified by robust policy evaluation before acceptance.
"""
from __future__ import annotations

import time

import numpy as np

from ..checker import graph
from ..checker.robust import _Rows, evaluate_fsc, lift_targets, robust_value
from ..models.core import Model, ModelError, Policy, Spec
from ..models.transform import (expand_observations, fsc_from_product_policy, fsc_product,
                                is_simple, leaf_distribution, to_simple_with_map)
from ..optim.lp import LinearProgram, solve_lp
from ..optim.scp import ScpConfig, bilinear_coeffs, scp_step, trust_bounds
from .report import SynthReport

SNAP_TOL = 1e-3
RESTARTS = 3


def _classes(M: Model) -> dict:
    acts = {}
    for s in range(M.n):
        ref = acts.setdefault(M.obs[s], M.actions[s])
        if ref != M.actions[s]:
            raise ModelError(f"states with observation {M.obs[s]!r} enable different actions")
    return acts


def _policy(M: Model, by_obs: dict) -> Policy:
    return Policy({s: dict(by_obs[M.obs[s]]) for s in range(M.n)})


class _PolicyScp:
    """SCP over observation-based memoryless policies of ``M``."""

    def __init__(self, M: Model, targets: frozenset, spec: Spec, cfg: ScpConfig):
        self.M, self.cfg = M, cfg
        self.spec = Spec(spec.kind, targets, spec.direction, spec.threshold, spec.optimize)
        self.lower = spec.direction == ">="
        self.reach = spec.kind == "reach"
        self.acts = _classes(M)
        self.rows = _Rows(M)
        self.st, self.first, *_ = M.choice_arrays()
        self.rew = M.choice_rewards()
        self.t = graph.targets_mask(M, targets)
        self.mu = M.init_vector
        # cutting planes for single-action interval rows, keyed by choice index
        ptr = self.rows.ptr
        self.cut_rows = [c for c in range(len(self.st))
                         if len(M.actions[self.st[c]]) == 1
                         and np.any(self.rows.cap[ptr[c]:ptr[c + 1]] > 0)]
        self.cuts = {c: {} for c in self.cut_rows}  # ordered set

    def add_cuts(self, values):
        P = self.rows.probs(np.where(np.isfinite(values), values, 0.0), self.spec.nature)
        ptr = self.rows.ptr
        for c in self.cut_rows:
            self.cuts[c].setdefault(tuple(P[ptr[c]:ptr[c + 1]].tolist()))

    def certify(self, by_obs):
        try:
            return robust_value(self.M, self.spec, _policy(self.M, by_obs))
        except ModelError as exc:
            if "dead-end" in str(exc):
                return None
            raise

    def better(self, a, b):
        return a > b if self.lower else a < b

    def build(self, sig, r_hat, free, delta):
        cfg, M = self.cfg, self.M
        lp = LinearProgram(sense="max" if self.lower else "min")
        sv = {}
        for z, acts in self.acts.items():
            if len(acts) < 2:
                continue
            js = []
            for a in acts:
                lo, hi = trust_bounds(max(sig[z][a], cfg.eps_pol), delta, cfg.eps_pol, 1.0)
                sv[(z, a)] = lp.add_var(f"sigma[{z}][{a}]", lo, hi)
                js.append(sv[(z, a)])
            lp.add_constraint({j: 1.0 for j in js}, "=", 1.0)
        rv, kv = {}, {}
        cap = 1.0 if self.reach else np.inf
        for s in np.nonzero(free)[0]:
            lo, hi = trust_bounds(r_hat[s], delta, 0.0, cap) if r_hat[s] > 0 else (0.0, delta)
            rv[s] = lp.add_var(f"r{s}", lo, hi, obj=self.mu[s])
            kv[s] = lp.add_var(f"k{s}", 0.0, obj=-cfg.tau if self.lower else cfg.tau)
        xf = np.where(np.isfinite(r_hat), r_hat, 0.0)
        P = self.rows.probs(xf, self.spec.nature)
        succ, ptr = self.rows.succ, self.rows.ptr
        rel = "<=" if self.lower else ">="
        for c in self.cut_rows:
            s = self.st[c]
            if s not in rv:
                continue
            for cut in self.cuts[c]:
                coeffs = {rv[s]: 1.0, kv[s]: -1.0 if self.lower else 1.0}
                rhs = self.rew[c]
                for t, p in zip(succ[ptr[c]:ptr[c + 1]], cut):
                    if t in rv:
                        coeffs[rv[t]] = coeffs.get(rv[t], 0.0) - p
                    elif self.reach and self.t[t]:
                        rhs += p
                lp.add_constraint(coeffs, rel, rhs)
        cut_states = {self.st[c] for c in self.cut_rows}
        for s, js in rv.items():
            if s in cut_states:
                continue
            z = M.obs[s]
            coeffs = {js: 1.0, kv[s]: -1.0 if self.lower else 1.0}
            rhs = 0.0
            for i, a in enumerate(M.actions[s]):
                c = self.first[s] + i
                const = self.rew[c]
                lin = {}
                for e in range(ptr[c], ptr[c + 1]):
                    t, p = succ[e], P[e]
                    if p == 0:
                        continue
                    if t in rv:
                        lin[t] = lin.get(t, 0.0) + p
                    elif self.reach and self.t[t]:
                        const += p
                j = sv.get((z, a))
                if j is None:
                    rhs += const
                    for t, p in lin.items():
                        coeffs[rv[t]] = coeffs.get(rv[t], 0.0) - p
                    continue
                s_hat = sig[z][a]
                coeffs[j] = coeffs.get(j, 0.0) - const
                for t, p in lin.items():
                    ay, az, k0 = bilinear_coeffs(s_hat, r_hat[t])
                    coeffs[j] -= p * ay
                    coeffs[rv[t]] = coeffs.get(rv[t], 0.0) - p * az
                    rhs += p * k0
            lp.add_constraint(coeffs, rel, rhs)
        return lp, sv

    def read(self, sol, sv, sig):
        out = {}
        for z, acts in self.acts.items():
            if len(acts) < 2:
                out[z] = {acts[0]: 1.0}
                continue
            w = np.array([max(sol.x[sv[(z, a)]], self.cfg.eps_pol) for a in acts])
            w /= w.sum()
            out[z] = dict(zip(acts, w.tolist()))
        return out

    def snap(self, sig):
        out = {}
        for z, d in sig.items():
            w = {a: (p if p > SNAP_TOL else 0.0) for a, p in d.items()}
            tot = sum(w.values())
            out[z] = {a: p / tot for a, p in w.items()}
        return out

    def run(self, sig=None):
        cfg, spec = self.cfg, self.spec
        t_start = time.perf_counter()
        if sig is None:
            sig = {z: {a: 1.0 / len(acts) for a in acts} for z, acts in self.acts.items()}
        res = self.certify(sig)
        if res is None:
            raise ModelError("dead-end: the initial uniform policy misses the goal set")
        beta_hat = res.init_value
        log = [{"iteration": 0, "value": beta_hat, "delta": cfg.delta0, "accepted": True}]
        if self.reach:
            gm = self.M
            free = ~self.t & ~graph.prob0A(gm, spec.targets)
        else:
            free = ~self.t & np.isfinite(res.values)
        r_hat = res.values.copy()
        self.add_cuts(r_hat)
        delta = cfg.delta0
        it, status = 0, None
        if cfg.stop_on_satisfied and spec.holds(beta_hat):
            status = "satisfied"
        while status is None and it < cfg.max_iters:
            it += 1
            lp, sv = self.build(sig, r_hat, free, delta)
            sol = solve_lp(lp)
            if not sol.ok:
                raise ModelError(f"internal error: linearized SCP program is {sol.status}")
            cand = self.read(sol, sv, sig)
            cres = self.certify(cand)
            beta = cres.init_value if cres is not None else (-np.inf if self.lower else np.inf)
            if cres is not None:
                self.add_cuts(cres.values)
            step = scp_step(beta, beta_hat, delta, cfg.gamma, self.lower)
            delta = step.delta
            log.append({"iteration": it, "value": float(beta), "delta": delta,
                        "accepted": step.accept})
            if step.accept:
                sig, beta_hat, r_hat = cand, beta, cres.values.copy()
                if cfg.stop_on_satisfied and spec.holds(beta_hat):
                    status = "satisfied"
            elif delta < cfg.omega:
                status = "satisfied" if spec.holds(beta_hat) else (
                    "converged" if spec.threshold is None else "no-improvement")
        if status is None:
            status = "max-iterations"
        # snap near-deterministic choices; kept only on strict improvement
        snapped = self.snap(sig)
        if snapped != sig:
            sres = self.certify(snapped)
            if sres is not None and self.better(sres.init_value, beta_hat):
                sig, beta_hat = snapped, sres.init_value
                log.append({"iteration": it + 1, "value": float(beta_hat), "delta": delta,
                            "accepted": True, "snap": True})
                if status != "satisfied" and spec.holds(beta_hat):
                    status = "satisfied"
        return sig, beta_hat, status, it, delta, log, time.perf_counter() - t_start

    def random_start(self, rng):
        return {z: dict(zip(acts, rng.dirichlet(np.ones(len(acts))).tolist()))
                for z, acts in self.acts.items()}

    def solve(self):
        """Best certified run over the uniform start and ``cfg.starts - 1``
        seeded random starts.  A stationary uniform start (no accepted step)
        always triggers at least ``RESTARTS`` extra starts."""
        best = self.run()
        rng = np.random.default_rng(self.cfg.seed)
        stalled = not any(e["accepted"] for e in best[5][1:])
        extra = max(self.cfg.starts - 1, RESTARTS if stalled else 0)
        trivial = self.reach and best[1] == (1.0 if self.lower else 0.0)
        used = 0
        while used < extra and best[2] != "satisfied" and not trivial:
            used += 1
            cand = self.run(self.random_start(rng))
            if self.better(cand[1], best[1]):
                best = cand
        return best + (used,)


def robust_fsc_synthesis(model: Model, k: int, spec: Spec, cfg: ScpConfig | None = None) -> SynthReport:
    """``k``-node FSC for a (u)POMDP whose robust value is certified."""
    if k < 1:
        raise ModelError("memory size must be at least 1")
    cfg = cfg or ScpConfig()
    spec.check_states(model.n)
    prod = fsc_product(model, k)
    simple, smap = to_simple_with_map(prod)
    if not is_simple(simple):
        raise ModelError("internal error: product is not simple after transformation")
    lifted = lift_targets(model, spec.targets, k)
    targets = frozenset(t for t in range(prod.n) if t in lifted)
    eng = _PolicyScp(simple, targets, spec, cfg)
    sig, value, status, it, delta, log, elapsed, restarts = eng.solve()
    by_prod = {}
    for s in range(prod.n):
        z = prod.obs[s]
        if z not in by_prod:
            by_prod[z] = leaf_distribution(smap, z, sig) if z in smap.paths else dict(sig[z])
    fsc = fsc_from_product_policy(model, k, by_prod)
    cert = evaluate_fsc(model, fsc, spec)
    if abs(cert.init_value - value) > 1e-7 * max(1.0, abs(value)):
        raise ModelError(f"internal error: FSC certificate {cert.init_value} != {value}")
    if status == "satisfied" and not spec.holds(cert.init_value):
        status = "violated"
    return SynthReport(status, cert.init_value, None, fsc, it, log, delta, elapsed,
                       {"memory": k, "product_states": prod.n, "simple_states": simple.n,
                        "restarts": restarts,
                        "satisfied": spec.holds(cert.init_value)})


def memoryless_scp_synthesis(model: Model, spec: Spec, cfg: ScpConfig | None = None) -> SynthReport:
    """Observation-based memoryless policy by SCP directly on the POMDP, without
    the simple normal form."""
    cfg = cfg or ScpConfig()
    spec.check_states(model.n)
    if model.obs is None:
        raise ModelError("memoryless synthesis needs an observation function")
    M = expand_observations(model)
    targets = lift_targets(model, spec.targets, 1)
    eng = _PolicyScp(M, targets, spec, cfg)
    sig, value, status, it, delta, log, elapsed, restarts = eng.solve()
    fsc = fsc_from_product_policy(model, 1, sig)
    cert = evaluate_fsc(model, fsc, spec)
    return SynthReport(status, cert.init_value, None, fsc, it, log, delta, elapsed,
                       {"memory": 1, "restarts": restarts, "satisfied": spec.holds(cert.init_value)})
