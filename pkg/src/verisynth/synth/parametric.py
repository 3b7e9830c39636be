"""Parametric Markov models with polynomial transition entries."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..models.core import PROB_TOL, Model, ModelError, Point
from ..models.io import ParseError

Monomial = tuple  # sorted tuple of (param, power)


class GraphError(ModelError):
    """An instantiation sets a transition probability to zero or below."""


@dataclass(frozen=True)
class Poly:
    """Polynomial in the parameters: ``terms[monomial] = coefficient``."""

    terms: Mapping[Monomial, float]

    @classmethod
    def const(cls, c: float) -> "Poly":
        return cls({(): float(c)})

    @classmethod
    def affine(cls, c: float = 0.0, **coeffs) -> "Poly":
        t = {(): float(c)}
        t.update({((v, 1),): float(d) for v, d in coeffs.items()})
        return cls(t)

    @classmethod
    def parse(cls, d) -> "Poly":
        """From ``{"const": c, "v": d, "v^3": e, "v*w": f}`` or a plain number."""
        if isinstance(d, (int, float)):
            return cls.const(float(d))
        terms: dict = {}
        for key, c in d.items():
            mono = _parse_monomial(key)
            terms[mono] = terms.get(mono, 0.0) + float(c)
        return cls(terms)

    def to_json(self) -> dict:
        return {_fmt_monomial(m): c for m, c in sorted(self.terms.items()) if c != 0}

    @property
    def params(self) -> set:
        return {v for m in self.terms for v, _ in m}

    @property
    def degree(self) -> int:
        return max((sum(p for _, p in m) for m, c in self.terms.items() if c != 0), default=0)

    @property
    def constant(self) -> float:
        return self.terms.get((), 0.0)

    def linear(self, v: str) -> float:
        return self.terms.get(((v, 1),), 0.0)

    def __call__(self, val: Mapping[str, float]) -> float:
        tot = 0.0
        for m, c in self.terms.items():
            x = c
            for v, p in m:
                x *= val[v] ** p
            tot += x
        return tot


def _parse_monomial(key: str) -> Monomial:
    key = key.replace(" ", "")
    if key in ("const", "1", ""):
        return ()
    powers: dict = {}
    for part in key.split("*"):
        m = re.fullmatch(r"([A-Za-z_]\w*)(?:\^(\d+))?", part)
        if not m:
            raise ParseError(f"cannot parse monomial {key!r}")
        powers[m[1]] = powers.get(m[1], 0) + int(m[2] or 1)
    return tuple(sorted(powers.items()))


def _fmt_monomial(m: Monomial) -> str:
    if not m:
        return "const"
    return "*".join(v if p == 1 else f"{v}^{p}" for v, p in m)


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """Explicit-state model whose entries are polynomials over ``params``.

    ``params`` maps each parameter to its box ``(lo, hi)``.  Rows must sum to
    one identically in the parameters.
    """

    n: int
    actions: tuple
    transitions: tuple  # per state, per action: tuple of (succ, Poly)
    params: Mapping[str, tuple[float, float]]
    initial: tuple = ((0, 1.0),)
    labels: tuple = ()
    rewards: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", tuple(frozenset() for _ in range(self.n)))
        for v, (lo, hi) in self.params.items():
            if not lo <= hi:
                raise ModelError(f"parameter {v}: empty range [{lo}, {hi}]")
        for s in range(self.n):
            if not self.actions[s]:
                raise ModelError(f"state {s} has no enabled action")
            for a, row in zip(self.actions[s], self.transitions[s]):
                tot: dict = {}
                for t, poly in row:
                    if not 0 <= t < self.n:
                        raise ModelError(f"state {s}, action {a!r}: successor out of range")
                    unknown = poly.params - set(self.params)
                    if unknown:
                        raise ModelError(f"state {s}, action {a!r}: unknown parameters {unknown}")
                    for m, c in poly.terms.items():
                        tot[m] = tot.get(m, 0.0) + c
                for m, c in tot.items():
                    want = 1.0 if m == () else 0.0
                    if abs(c - want) > PROB_TOL:
                        raise ModelError(f"state {s}, action {a!r}: row does not sum to 1 "
                                         f"identically (term {_fmt_monomial(m)} sums to {c})")
                if () not in tot:
                    raise ModelError(f"state {s}, action {a!r}: row does not sum to 1")

    @classmethod
    def build(cls, n: int, rows: Mapping, params: Mapping, initial=0, labels=None,
              rewards=None) -> "ParametricModel":
        acts = [[] for _ in range(n)]
        trans = [[] for _ in range(n)]
        for (s, a), succ in rows.items():
            acts[s].append(a)
            trans[s].append(tuple((int(t), p if isinstance(p, Poly) else
                                   Poly.parse(p)) for t, p in succ))
        rew = None
        if rewards:
            rew = tuple(tuple(float(rewards.get((s, a), 0.0)) for a in acts[s]) for s in range(n))
        init = ((int(initial), 1.0),) if isinstance(initial, int) else tuple(initial)
        lab = tuple(frozenset((labels or {}).get(s, ())) for s in range(n))
        return cls(n, tuple(tuple(a) for a in acts), tuple(tuple(t) for t in trans),
                   dict(params), init, lab, rew)

    @property
    def param_names(self) -> list[str]:
        return sorted(self.params)

    @property
    def is_affine(self) -> bool:
        return all(p.degree <= 1 for rows in self.transitions for row in rows for _, p in row)

    @property
    def midpoint(self) -> dict:
        return {v: (lo + hi) / 2 for v, (lo, hi) in self.params.items()}

    def instantiate(self, val: Mapping[str, float], eps: float = 0.0) -> Model:
        trans = []
        for s in range(self.n):
            per = []
            for a, row in zip(self.actions[s], self.transitions[s]):
                ents = []
                for t, poly in row:
                    p = poly(val)
                    if p <= eps:
                        raise GraphError(f"instantiation {dict(val)} gives P({s},{a},{t}) = {p}")
                    ents.append((t, Point(min(p, 1.0))))
                per.append(tuple(ents))
            trans.append(tuple(per))
        return Model(actions=self.actions, transitions=tuple(trans), initial=self.initial,
                     labels=self.labels, rewards=self.rewards,
                     kind="mc" if all(len(a) == 1 for a in self.actions) else "mdp")

    def affine_min(self, poly: Poly) -> float:
        """Minimum of an affine entry over the parameter box."""
        lo = poly.constant
        for v, (a, b) in self.params.items():
            d = poly.linear(v)
            lo += min(d * a, d * b)
        return lo

    def check_graph_preserving(self, eps: float):
        if not self.is_affine:
            return
        for s in range(self.n):
            for a, row in zip(self.actions[s], self.transitions[s]):
                for t, poly in row:
                    if self.affine_min(poly) < eps - PROB_TOL:
                        raise GraphError(f"entry P({s},{a},{t}) drops below {eps} inside the "
                                         "parameter box")

    def graph_model(self) -> Model:
        """Model with the parametric graph and arbitrary positive weights."""
        return self.instantiate(self.midpoint) if self.params else self.instantiate({})

    def to_dict(self) -> dict:
        d = {"type": "pmdp", "states": self.n,
             "params": {v: list(b) for v, b in self.params.items()},
             "initial": [{"s": s, "p": p} for s, p in self.initial],
             "rows": [{"s": s, "a": a, "to": [{"s": t, "poly": p.to_json()} for t, p in row]}
                      for s in range(self.n) for a, row in zip(self.actions[s], self.transitions[s])]}
        lab = {str(s): sorted(self.labels[s]) for s in range(self.n) if self.labels[s]}
        if lab:
            d["labels"] = lab
        if self.rewards is not None:
            d["rewards"] = [{"s": s, "a": a, "r": r} for s in range(self.n)
                            for a, r in zip(self.actions[s], self.rewards[s]) if r]
        return d


def parametric_from_dict(d: Mapping) -> ParametricModel:
    try:
        n = int(d["states"])
        params = {v: (float(b[0]), float(b[1])) for v, b in d.get("params", {}).items()}
        rows = {}
        for i, r in enumerate(d["rows"]):
            succ = []
            for j, e in enumerate(r["to"]):
                if "poly" in e:
                    succ.append((int(e["s"]), Poly.parse(e["poly"])))
                elif "p" in e:
                    succ.append((int(e["s"]), Poly.const(float(e["p"]))))
                else:
                    raise ParseError(f"$.rows[{i}].to[{j}]: entry needs 'p' or 'poly'")
            rows[(int(r["s"]), str(r.get("a", "tau")))] = succ
        init = d.get("initial", 0)
        if isinstance(init, list):
            init = tuple((int(x["s"]), float(x["p"])) for x in init)
        labels = {int(k): v for k, v in d.get("labels", {}).items()}
        rewards = {(int(r["s"]), str(r.get("a", "tau"))): float(r["r"]) for r in d.get("rewards", [])}
    except KeyError as exc:
        raise ParseError(f"parametric model: missing field {exc.args[0]!r}") from None
    return ParametricModel.build(n, rows, params, init, labels, rewards or None)


def is_parametric_json(d: Mapping) -> bool:
    return d.get("type") == "pmdp" or "params" in d


def parse_parametric(text: str) -> ParametricModel:
    return parametric_from_dict(json.loads(text))


def sample_values(pm: ParametricModel, rng: np.random.Generator, dists: Mapping | None = None) -> dict:
    """Draw one parameter valuation: uniform over the box unless ``dists`` gives
    ``("beta", a, b)`` (scaled to the box) or ``("discrete", values, probs)``."""
    out = {}
    for v in pm.param_names:
        lo, hi = pm.params[v]
        spec = (dists or {}).get(v, ("uniform",))
        kind = spec[0]
        if kind == "uniform":
            out[v] = float(rng.uniform(lo, hi))
        elif kind == "beta":
            out[v] = float(lo + (hi - lo) * rng.beta(spec[1], spec[2]))
        elif kind == "discrete":
            out[v] = float(rng.choice(np.asarray(spec[1], dtype=float), p=spec[2]))
        else:
            raise ValueError(f"unknown distribution {kind!r}")
    return out

