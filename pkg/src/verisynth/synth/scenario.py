"""Scenario-based verification of uncertain Markov models.

K instantiations are drawn from the uncertainty set, each is model checked,
and the number L of violating samples yields a confidence statement: with
probability at least ``1 - alpha(K, L, nu)`` the satisfying set has measure at
least ``1 - nu``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..checker.mdp import check_spec
from ..models.core import POINT_KIND, Model, ModelError, Point, Spec
from .parametric import GraphError, ParametricModel, sample_values

ALPHA_GRID = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2)
_EXACT_K = 1000  # above this, log C(K, i) via lgamma (big-integer comb gets slow)


def _log_comb(K: int, i: int) -> float:
    if K <= _EXACT_K:
        return math.log(math.comb(K, i))
    return math.lgamma(K + 1) - math.lgamma(i + 1) - math.lgamma(K - i + 1)


def _sum_terms(K: int, idx, l0: float, l1: float) -> float:
    logs = [_log_comb(K, i) + (K - i) * l0 + i * l1 for i in idx]
    m = max(logs)
    return math.exp(m) * math.fsum(math.exp(x - m) for x in logs)


def confidence_bound(K: int, L: int, nu: float, clip: bool = True) -> float:
    """(L+1) * sum_{i<=L+1} C(K,i) (1-nu)^(K-i) nu^i, summed in log space.

    With ``clip`` the value is capped at 1 (a probability); the raw value is
    strictly monotone and is what the bisection works on.
    """
    if not (isinstance(K, (int, np.integer)) and K >= 2):
        raise ValueError("K must be an integer >= 2")
    if not 0 <= L < K:
        raise ValueError("need 0 <= L < K")
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    top = min(L + 1, K)
    if nu == 0.0 or top == K:
        raw = float(L + 1)  # only the i = 0 term survives, or the full binomial sum
    elif nu == 1.0:
        raw = 0.0
    else:
        l1, l0 = math.log(nu), math.log1p(-nu)
        head = _sum_terms(K, range(top + 1), l0, l1)
        if head > 0.5 and top < K:
            # near 1 the complement is accurate and keeps the bound monotone in K
            head = 1.0 - _sum_terms(K, range(top + 1, K + 1), l0, l1)
        raw = (L + 1) * head
    return min(raw, 1.0) if clip else raw


def bisect_nu(K: int, L: int, alpha_target: float, width: float = 1e-6) -> tuple[float, float]:
    """Bracket [nu_lo, nu_hi] with alpha(nu_hi) <= alpha_target < alpha(nu_lo)."""
    if not 0.0 < alpha_target <= 1.0:
        raise ValueError("alpha_target must lie in (0, 1]")
    f = lambda nu: confidence_bound(K, L, nu, clip=False)
    if alpha_target >= f(0.0):
        return 0.0, 0.0
    lo, hi = 0.0, 1.0
    if f(hi) > alpha_target:  # L + 1 == K: no tolerance certifies
        return 1.0, 1.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if f(mid) <= alpha_target:
            hi = mid
        else:
            lo = mid
    return lo, hi


@dataclass(frozen=True)
class ScenarioConfig:
    K: int = 1000
    distribution: Mapping = field(default_factory=dict)  # parameter -> sampler spec
    seed: int = 0
    nu: float | None = None
    alpha: float | None = None
    max_retries: int = 1000
    eps_graph: float = 0.0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("scenario verification needs K >= 2 samples")
        if self.nu is not None and not 0.0 <= self.nu < 1.0:
            raise ValueError("nu must lie in [0, 1)")
        if self.alpha is not None and not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")


def n_threads() -> int:
    env = os.environ.get("VERISYNTH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"VERISYNTH_THREADS must be an integer, got {env!r}") from None
    return min(8, os.cpu_count() or 1)


def sample_interval_row(row, rng: np.random.Generator, max_retries: int = 1000):
    """Uniform draw from {lo <= p <= hi, sum p = 1} by shifted-simplex rejection."""
    lo = np.array([e.lo for _, e in row])
    hi = np.array([e.hi for _, e in row])
    budget = 1.0 - lo.sum()
    if budget <= 0:
        return lo / lo.sum()
    for _ in range(max_retries):
        p = lo + budget * rng.dirichlet(np.ones(len(row)))
        if np.all(p <= hi + 1e-12):
            return p
    raise ModelError(f"could not sample an interval row in {max_retries} tries")


def sample_interval_model(model: Model, rng: np.random.Generator, max_retries: int = 1000) -> Model:
    trans = []
    for per_state in model.transitions:
        rows = []
        for row in per_state:
            if any(e.is_interval for _, e in row):
                p = sample_interval_row(row, rng, max_retries)
                rows.append(tuple((t, Point(float(q))) for (t, _), q in zip(row, p) if q > 0))
            else:
                rows.append(row)
        trans.append(tuple(rows))
    kind = POINT_KIND.get(model.kind, model.kind)
    return model.replace(transitions=tuple(trans), kind=kind)


def _draw(model, cfg: ScenarioConfig, rng):
    if isinstance(model, ParametricModel):
        for _ in range(cfg.max_retries):
            val = sample_values(model, rng, cfg.distribution)
            try:
                return model.instantiate(val, cfg.eps_graph), val
            except GraphError:
                continue
        raise ModelError(f"no graph-preserving sample in {cfg.max_retries} tries")
    return sample_interval_model(model, rng, cfg.max_retries), None


def scenario_verify(model, spec: Spec, cfg: ScenarioConfig | None = None) -> dict:
    """Sample, check and count violations; report the confidence table.

    For models with choices the sample is judged under the policy sense that
    works against the requirement, so a satisfied sample holds for all policies.
    """
    cfg = cfg or ScenarioConfig()
    if spec.kind != "reach" or spec.threshold is None:
        raise ModelError("scenario verification needs a reachability threshold")
    check = Spec(spec.kind, spec.targets, spec.direction, spec.threshold, spec.nature)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.K)

    def job(i):
        inst, val = _draw(model, cfg, np.random.default_rng(seeds[i]))
        return check_spec(inst, check).init_value, val

    workers = min(n_threads(), cfg.K)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(job, range(cfg.K)))
    else:
        out = [job(i) for i in range(cfg.K)]
    values = np.array([v for v, _ in out])
    sat = np.array([bool(spec.holds(v)) for v in values])
    L = int((~sat).sum())
    rep = {"K": cfg.K, "sat_count": int(sat.sum()), "viol_count": L,
           "sat_rate": float(sat.mean()), "values": values,
           "alpha_table": [{"nu": nu, "alpha": confidence_bound(cfg.K, L, nu)} for nu in ALPHA_GRID]
           if L < cfg.K else []}
    if L >= cfg.K:
        rep["note"] = "every sample violates the specification"
    elif cfg.nu is not None:
        rep["nu"] = cfg.nu
        rep["alpha"] = confidence_bound(cfg.K, L, cfg.nu)
    if cfg.alpha is not None and L < cfg.K:
        lo, hi = bisect_nu(cfg.K, L, cfg.alpha)
        rep["alpha_target"] = cfg.alpha
        rep["nu_star"] = hi
        rep["nu_bracket"] = [lo, hi]
    return rep
