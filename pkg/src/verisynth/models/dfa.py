from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import ModelError


@dataclass(frozen=True)
class Edge:
    src: int
    guard: tuple[tuple[str, bool], ...]  # conjunction of literals; empty = default
    dst: int

    def matches(self, valuation) -> bool:
        return all((p in valuation) == want for p, want in self.guard)


@dataclass(frozen=True)
class Dfa:
    """Deterministic automaton over proposition valuations.

    Edges are tried in order per source state (first match wins); every state
    must own a default edge so that the transition function is total.
    """

    props: tuple[str, ...]
    n_states: int
    init: int
    accepting: frozenset
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if not 0 <= self.init < self.n_states:
            raise ModelError("DFA initial state out of range")
        if any(not 0 <= q < self.n_states for q in self.accepting):
            raise ModelError("accepting set is not a subset of the DFA states")
        by_src: dict[int, list[Edge]] = {q: [] for q in range(self.n_states)}
        for e in self.edges:
            if not (0 <= e.src < self.n_states and 0 <= e.dst < self.n_states):
                raise ModelError(f"DFA edge {e} out of range")
            for p, _ in e.guard:
                if p not in self.props:
                    raise ModelError(f"guard mentions unknown proposition {p!r}")
            by_src[e.src].append(e)
        for q, es in by_src.items():
            if not es or es[-1].guard:
                raise ModelError(f"DFA state {q} lacks a trailing default edge")
        object.__setattr__(self, "_by_src", by_src)

    def step(self, q: int, valuation) -> int:
        for e in self._by_src[q]:
            if e.matches(valuation):
                return e.dst
        raise AssertionError("unreachable: default edge missing")

    def out_edges(self, q: int) -> list[Edge]:
        return list(self._by_src[q])

    def relevant_props(self, q: int) -> set[str]:
        """Propositions guarding edges that leave ``q``."""
        return {p for e in self._by_src[q] for p, _ in e.guard}

    def transition_probs(self, q: int, belief: Mapping[str, float]) -> dict[int, float]:
        """Distribution of the successor of ``q`` when each proposition holds
        independently with the given probability."""
        out: dict[int, float] = {}
        # first-match semantics: P(edge i fires) = P(guard_i and not guard_j for j<i)
        # computed by enumerating the valuations of the relevant propositions
        props = sorted(self.relevant_props(q))
        if not props:
            return {self._by_src[q][-1].dst: 1.0}
        for bits in range(1 << len(props)):
            val = {p for i, p in enumerate(props) if bits >> i & 1}
            w = 1.0
            for i, p in enumerate(props):
                b = belief.get(p, 0.0)
                w *= b if bits >> i & 1 else 1.0 - b
            if w == 0.0:
                continue
            dst = self.step(q, val)
            out[dst] = out.get(dst, 0.0) + w
        return out

    def coaccessible(self) -> set[int]:
        """DFA states from which some accepting state is reachable."""
        pred: dict[int, set[int]] = {q: set() for q in range(self.n_states)}
        for e in self.edges:
            pred[e.dst].add(e.src)
        seen = set(self.accepting)
        todo = list(seen)
        while todo:
            q = todo.pop()
            for r in pred[q]:
                if r not in seen:
                    seen.add(r)
                    todo.append(r)
        return seen


def reach_avoid_dfa(goal: str = "goal", avoid: str = "obs") -> Dfa:
    """q0 --avoid--> q2 (sink), q0 --goal--> q1 (accepting)."""
    edges = (
        Edge(0, ((avoid, True),), 2),
        Edge(0, ((goal, True),), 1),
        Edge(0, (), 0),
        Edge(1, (), 1),
        Edge(2, (), 2),
    )
    return Dfa((goal, avoid), 3, 0, frozenset({1}), edges)


def parse_guard(guard: Mapping[str, object]) -> tuple[tuple[str, bool], ...]:
    lits = []
    for p, v in guard.items():
        if v == "*":
            continue
        if not isinstance(v, bool):
            raise ModelError(f"guard value for {p!r} must be true, false or '*'")
        lits.append((p, v))
    return tuple(lits)


def dfa_from_dict(d: Mapping) -> Dfa:
    try:
        props = tuple(d["props"])
        edges = tuple(Edge(int(e["from"]), parse_guard(e.get("guard", {})), int(e["to"]))
                      for e in d["edges"])
        return Dfa(props, int(d["states"]), int(d["init"]), frozenset(d["accepting"]), edges)
    except KeyError as exc:
        raise ModelError(f"DFA: missing field {exc.args[0]!r}") from None


def dfa_to_dict(dfa: Dfa) -> dict:
    return {
        "props": list(dfa.props), "states": dfa.n_states, "init": dfa.init,
        "accepting": sorted(dfa.accepting),
        "edges": [{"from": e.src, "guard": {p: v for p, v in e.guard}, "to": e.dst}
                  for e in dfa.edges],
    }

