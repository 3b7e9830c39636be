"""Average action entropy of an FSC at the critical (node, state) pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..checker.robust import evaluate_fsc
from ..models.core import Fsc, Model, ModelError, Spec
from ..models.transform import expand_observations, expansion_origin, fsc_product, \
    product_policy_from_fsc


@dataclass
class CriticalEntropy:
    crit: frozenset  # (node, original state)
    H: float | None
    value: float

    def signal(self, eta: float) -> str | None:
        """'more-data' when the FSC randomizes above eta, else 'more-memory'."""
        if self.H is None:
            return None
        return "more-data" if self.H > eta else "more-memory"

    def to_dict(self) -> dict:
        return {"crit": sorted(map(list, self.crit)), "H": self.H, "value": self.value}


def normalized_entropy(dist, n_actions: int) -> float:
    if n_actions < 2:
        return 0.0
    p = np.array([v for v in dist.values() if v > 0])
    return float(-(p * np.log2(p)).sum() / math.log2(n_actions))


def _decision_point(model: Model, s: int) -> bool:
    rows = {tuple(sorted((t, e.lo, e.hi) for t, e in row)) for row in model.transitions[s]}
    return len(rows) > 1


def entropy_over_critical(model: Model, fsc: Fsc, spec: Spec) -> CriticalEntropy:
    """Pairs reachable under the FSC whose value breaches the threshold, restricted
    to states where the action choice matters, and the mean normalized entropy
    of the FSC's action distribution over them."""
    if spec.threshold is None:
        raise ModelError("entropy over critical pairs needs a threshold")
    res = evaluate_fsc(model, fsc, spec)
    if spec.holds(res.init_value):
        return CriticalEntropy(frozenset(), None, float(res.init_value))
    k = fsc.n_nodes
    ex = expand_observations(model)
    origin = expansion_origin(model)
    prod = fsc_product(model, k)
    pol = product_policy_from_fsc(model, fsc)
    # states reachable in the induced chain
    seen = {x for x, p in prod.initial if p > 0}
    todo = list(seen)
    while todo:
        x = todo.pop()
        for a, w in pol.dist(x).items():
            if w <= 0:
                continue
            for t, e in prod.transitions[x][prod.action_index(x, a)]:
                if e.hi > 0 and t not in seen:
                    seen.add(t)
                    todo.append(t)
    crit, hs = set(), []
    for x in sorted(seen):
        s, node = divmod(x, k)
        if spec.holds(float(res.values[x])) or not _decision_point(ex, s):
            continue
        crit.add((node, origin[s]))
        hs.append(normalized_entropy(fsc.act(node, ex.obs[s]), len(ex.actions[s])))
    H = float(np.mean(hs)) if hs else None
    return CriticalEntropy(frozenset(crit), H, float(res.init_value))
