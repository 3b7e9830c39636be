"""JSON (de)serialization of models, controllers, policies and specs."""
from __future__ import annotations

import json
import re
from typing import Any, Mapping

from .core import UNCERTAIN_KIND, Fsc, Interval, Model, ModelError, Point, Policy, Spec


class ParseError(ModelError):
    """Input does not conform to the JSON model format."""


_KINDS = ("mc", "mdp", "pomdp", "umc", "umdp", "upomdp")


def _field(d: Mapping, key: str, path: str):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ParseError(f"{path}: missing field {key!r}") from None


def _entry_from_json(e: Mapping, path: str):
    if "p" in e:
        return Point(float(e["p"]))
    if "lo" in e and "hi" in e:
        return Interval(float(e["lo"]), float(e["hi"]))
    raise ParseError(f"{path}: successor needs 'p' or 'lo'/'hi'")


def model_from_dict(d: Mapping) -> Model:
    kind = _field(d, "type", "$")
    if kind not in _KINDS:
        raise ParseError(f"$.type: unknown model type {kind!r}")
    n = _field(d, "states", "$")
    if not isinstance(n, int) or n < 1:
        raise ParseError("$.states: expected a positive integer")
    rows = {}
    for i, r in enumerate(_field(d, "rows", "$")):
        path = f"$.rows[{i}]"
        s = int(_field(r, "s", path))
        a = str(r.get("a", "tau"))
        succ = []
        for j, e in enumerate(_field(r, "to", path)):
            try:
                succ.append((int(_field(e, "s", f"{path}.to[{j}]")),
                             _entry_from_json(e, f"{path}.to[{j}]")))
            except ModelError as exc:
                raise type(exc)(f"{path}.to[{j}] (state {s}, action {a!r}): {exc}") from None
        if (s, a) in rows:
            raise ParseError(f"{path}: duplicate row for state {s}, action {a!r}")
        rows[(s, a)] = succ
    init = d.get("initial", 0)
    if isinstance(init, list):
        init = [(int(x["s"]), float(x["p"])) for x in init]
    obs = None
    if "obs" in d:
        raw = d["obs"]
        obs = {int(k): ({_hashable(a): b for a, b in v.items()} if isinstance(v, Mapping) else _hashable(v))
               for k, v in raw.items()}
        missing = [s for s in range(n) if s not in obs]
        if missing:
            raise ParseError(f"$.obs: no observation for states {missing}")
    labels = {int(k): v for k, v in d.get("labels", {}).items()}
    rewards = None
    if d.get("rewards"):
        rewards = {}
        for i, r in enumerate(d["rewards"]):
            rewards[(int(_field(r, "s", f"$.rewards[{i}]")), str(r.get("a", "tau")))] = \
                float(_field(r, "r", f"$.rewards[{i}]"))
    names = d.get("names")
    m = Model.build(n, rows, initial=init, labels=labels, obs=obs, rewards=rewards,
                    kind=kind, names=names)
    if kind in ("mc", "umc") and any(len(a) > 1 for a in m.actions):
        raise ParseError("$.type: 'mc' model has states with several actions")
    if kind in ("pomdp", "upomdp") and obs is None:
        raise ParseError(f"$.obs: required for type {kind!r}")
    if kind in ("mc", "mdp", "pomdp") and m.has_intervals:
        raise ParseError(f"$.type: {kind!r} model contains interval entries")
    return m


def parse_model(text: str | bytes) -> Model:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(d)


def _entry_to_json(t: int, e) -> dict:
    if e.is_interval:
        return {"s": t, "lo": e.lo, "hi": e.hi}
    return {"s": t, "p": e.p}


def model_to_dict(m: Model) -> dict:
    kind = UNCERTAIN_KIND.get(m.kind, m.kind) if m.has_intervals else m.kind
    d: dict[str, Any] = {"type": kind, "states": m.n}
    if len(m.initial) == 1 and m.initial[0][1] == 1.0:
        d["initial"] = m.initial[0][0]
    else:
        d["initial"] = [{"s": s, "p": p} for s, p in m.initial]
    d["actions"] = sorted({a for acts in m.actions for a in acts})
    d["rows"] = [{"s": s, "a": a, "to": [_entry_to_json(t, e) for t, e in row]}
                 for s in range(m.n) for a, row in zip(m.actions[s], m.transitions[s])]
    if m.obs is not None:
        d["obs"] = {str(s): m.obs[s] for s in range(m.n)}
    labels = {str(s): sorted(m.labels[s]) for s in range(m.n) if m.labels[s]}
    if labels:
        d["labels"] = labels
    if m.rewards is not None:
        d["rewards"] = [{"s": s, "a": a, "r": r} for s in range(m.n)
                        for a, r in zip(m.actions[s], m.rewards[s]) if r != 0.0]
    if m.names is not None:
        d["names"] = list(m.names)
    return d


def serialize_model(m: Model) -> str:
    # repr-exact floats keep full precision through json
    return json.dumps(model_to_dict(m), indent=1)


# -- controllers and policies --------------------------------------------------

def fsc_to_dict(f: Fsc) -> dict:
    return {
        "nodes": f.n_nodes, "initial_node": f.initial_node,
        "action_map": [{"node": n, "obs": z, "dist": dict(d)} for (n, z), d in f.action_map.items()],
        "memory_update": [{"node": n, "obs": z, "action": a, "dist": {str(k): v for k, v in d.items()}}
                          for (n, z, a), d in f.memory_update.items()],
    }


def fsc_from_dict(d: Mapping) -> Fsc:
    am = {(int(e["node"]), _hashable(e["obs"])): dict(e["dist"]) for e in d["action_map"]}
    mu = {(int(e["node"]), _hashable(e["obs"]), e["action"]): {int(k): v for k, v in e["dist"].items()}
          for e in d.get("memory_update", [])}
    return Fsc(int(d["nodes"]), am, mu, int(d.get("initial_node", 0)))


def _hashable(z):
    return tuple(_hashable(x) for x in z) if isinstance(z, list) else z


def policy_to_dict(p: Policy) -> dict:
    return {"kind": p.kind, "choice": {str(s): dict(d) for s, d in sorted(p.choice.items())}}


def policy_from_dict(d: Mapping) -> Policy:
    return Policy({int(s): dict(v) for s, v in d["choice"].items()}, kind=d.get("kind", "randomized"))


# -- specs ---------------------------------------------------------------------

_SPEC_RE = re.compile(
    r"^\s*(?P<kind>reach|cost)\s*(?P<dir>>=|<=|≥|≤)\s*(?P<thr>[0-9.eE+-]+)\s*"
    r"\{(?P<targets>[^}]*)\}\s*(?P<opt>max|min)?\s*$")


def parse_spec(text: str, model: Model | None = None) -> Spec:
    """Parse e.g. ``"reach >= 0.85 {6}"`` or ``"cost <= 4 {goal} min"``.

    Target tokens are state indices, state names, or labels (all states
    carrying that label).
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise ParseError(f"cannot parse spec {text!r}")
    direction = {"≥": ">=", "≤": "<="}.get(m["dir"], m["dir"])
    targets: set[int] = set()
    for tok in filter(None, (t.strip() for t in m["targets"].split(","))):
        if tok.isdigit():
            targets.add(int(tok))
        elif model is None:
            raise ParseError(f"target {tok!r} needs a model to resolve")
        else:
            hits = set(model.states_with(tok))
            if model.names is not None:
                hits |= {s for s in range(model.n) if model.names[s] == tok}
            if not hits and re.fullmatch(r"s\d+", tok):
                hits = {int(tok[1:])}
            if not hits:
                raise ParseError(f"target {tok!r} matches no state")
            targets |= hits
    spec = Spec(m["kind"], frozenset(targets), direction, float(m["thr"]), m["opt"])
    if model is not None:
        spec.check_states(model.n)
    return spec


def spec_to_str(spec: Spec) -> str:
    t = ",".join(str(s) for s in sorted(spec.targets))
    return f"{spec.kind} {spec.direction} {spec.threshold} {{{t}}} {spec.optimize}"
