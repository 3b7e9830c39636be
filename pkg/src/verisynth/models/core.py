"""Explicit-state Markov models, policies, controllers and specifications."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model, policy or automaton violates a structural invariant."""


@dataclass(frozen=True)
class Point:
    p: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0 + PROB_TOL):
            raise ModelError(f"point probability {self.p} outside (0, 1]")

    @property
    def lo(self) -> float:
        return self.p

    @property
    def hi(self) -> float:
        return self.p

    @property
    def is_interval(self) -> bool:
        return False


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo <= 0.0:
            # instantiations must not remove transitions
            raise ModelError(f"zero lower bound in interval [{self.lo}, {self.hi}]: "
                             "interval lower bounds must be strictly positive")
        if self.lo > self.hi + PROB_TOL or self.hi > 1.0 + PROB_TOL:
            raise ModelError(f"malformed interval [{self.lo}, {self.hi}]")

    @property
    def is_interval(self) -> bool:
        return True


ProbEntry = Point | Interval


def entry(lo: float, hi: float | None = None) -> ProbEntry:
    if hi is None or hi == lo:
        return Point(lo)
    return Interval(lo, hi)


Row = tuple[tuple[int, ProbEntry], ...]

# interval-carrying kinds and their nominal counterparts
POINT_KIND = {"umc": "mc", "umdp": "mdp", "upomdp": "pomdp"}
UNCERTAIN_KIND = {v: k for k, v in POINT_KIND.items()}


@dataclass(frozen=True, eq=False)
class Model:
    """Unified MC/MDP/POMDP/uPOMDP.

    ``transitions[s][i]`` is the successor row of the ``i``-th enabled action of
    ``s`` (``actions[s][i]``).  ``obs`` maps each state to an observation id, or
    to a distribution over ids before :func:`expand_observations` is applied.
    Rewards are per (state, action) and default to zero.
    """

    actions: tuple[tuple[str, ...], ...]
    transitions: tuple[tuple[Row, ...], ...]
    initial: tuple[tuple[int, float], ...]
    labels: tuple[frozenset, ...] = ()
    obs: tuple | None = None
    rewards: tuple[tuple[float, ...], ...] | None = None
    kind: str = "mdp"
    names: tuple[str, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.actions)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(frozenset() for _ in range(n)))
        self._validate()

    # -- construction helpers -------------------------------------------------
    @classmethod
    def build(cls, n: int, rows: Mapping[tuple[int, str], Iterable], initial=0,
              labels: Mapping[int, Iterable[str]] | None = None, obs=None,
              rewards: Mapping[tuple[int, str], float] | None = None,
              kind: str | None = None, names=None) -> "Model":
        """Build from ``{(s, action): [(succ, p | (lo, hi) | ProbEntry), ...]}``.

        Action order per state follows first appearance in ``rows``.
        """
        acts: list[list[str]] = [[] for _ in range(n)]
        trans: list[list[Row]] = [[] for _ in range(n)]
        for (s, a), succs in rows.items():
            if not 0 <= s < n:
                raise ModelError(f"row for unknown state {s}")
            if a in acts[s]:
                raise ModelError(f"duplicate action {a!r} at state {s}")
            acts[s].append(a)
            trans[s].append(tuple((int(t), _as_entry(p)) for t, p in succs))
        rew = None
        if rewards:
            rew = tuple(tuple(float(rewards.get((s, a), 0.0)) for a in acts[s]) for s in range(n))
            for (s, a) in rewards:
                if a not in acts[s]:
                    raise ModelError(f"reward for undefined action {a!r} at state {s}")
        if isinstance(initial, (int, np.integer)):
            init = ((int(initial), 1.0),)
        elif isinstance(initial, Mapping):
            init = tuple((int(s), float(p)) for s, p in initial.items())
        else:
            init = tuple((int(s), float(p)) for s, p in initial)
        lab = tuple(frozenset(labels.get(s, ())) if labels else frozenset() for s in range(n))
        ob = None
        if obs is not None:
            ob = tuple(obs[s] if not isinstance(obs, Mapping) else obs.get(s) for s in range(n))
        if kind is None:
            has_int = any(e.is_interval for row in _iter_rows(trans) for _, e in row)
            if ob is not None:
                kind = "upomdp" if has_int else "pomdp"
            elif all(len(a) == 1 for a in acts):
                kind = "umc" if has_int else "mc"
            else:
                kind = "umdp" if has_int else "mdp"
        return cls(actions=tuple(tuple(a) for a in acts),
                   transitions=tuple(tuple(t) for t in trans),
                   initial=init, labels=lab, obs=ob, rewards=rew, kind=kind,
                   names=tuple(names) if names is not None else None)

    # -- invariants -----------------------------------------------------------
    def _validate(self):
        n = self.n
        if len(self.transitions) != n or len(self.labels) != n:
            raise ModelError("per-state tables have inconsistent lengths")
        for s in range(n):
            if not self.actions[s]:
                raise ModelError(f"state {s} has no enabled action")
            if len(self.transitions[s]) != len(self.actions[s]):
                raise ModelError(f"state {s}: action/row count mismatch")
            for a, row in zip(self.actions[s], self.transitions[s]):
                _check_row(row, n, f"state {s}, action {a!r}")
        total = 0.0
        for s, p in self.initial:
            if not 0 <= s < n or p < -PROB_TOL:
                raise ModelError(f"bad initial entry ({s}, {p})")
            total += p
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"initial distribution sums to {total}")
        if self.rewards is not None:
            for s in range(n):
                if len(self.rewards[s]) != len(self.actions[s]):
                    raise ModelError(f"state {s}: reward table mismatch")
                if any(r < 0 for r in self.rewards[s]):
                    raise ModelError(f"state {s}: negative reward")
        if self.obs is not None:
            if len(self.obs) != n:
                raise ModelError("observation table length mismatch")
            seen: dict = {}
            for s in range(n):
                for z in _obs_support(self.obs[s]):
                    prev = seen.setdefault(z, (s, set(self.actions[s])))
                    if prev[1] != set(self.actions[s]):
                        raise ModelError(
                            f"states {prev[0]} and {s} share observation {z!r} "
                            "but have different enabled actions")

    # -- queries --------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.actions)

    @property
    def has_intervals(self) -> bool:
        return any(e.is_interval for row in _iter_rows(self.transitions) for _, e in row)

    @property
    def deterministic_obs(self) -> bool:
        return self.obs is None or all(not isinstance(z, Mapping) for z in self.obs)

    @property
    def init_vector(self) -> np.ndarray:
        v = np.zeros(self.n)
        for s, p in self.initial:
            v[s] += p
        return v

    @property
    def initial_state(self) -> int:
        """The initial state when the initial distribution is a Dirac."""
        if len(self.initial) != 1:
            raise ModelError("model has an initial distribution, not a single state")
        return self.initial[0][0]

    def action_index(self, s: int, a: str) -> int:
        try:
            return self.actions[s].index(a)
        except ValueError:
            raise ModelError(f"action {a!r} not enabled in state {s}") from None

    def reward(self, s: int, i: int) -> float:
        return 0.0 if self.rewards is None else self.rewards[s][i]

    def states_with(self, label: str) -> frozenset:
        return frozenset(s for s in range(self.n) if label in self.labels[s])

    def name(self, s: int) -> str:
        return self.names[s] if self.names is not None else f"s{s}"

    def observations(self) -> list:
        """Observation ids in order of first appearance."""
        out, seen = [], set()
        for z in self.obs or ():
            for y in _obs_support(z):
                if y not in seen:
                    seen.add(y)
                    out.append(y)
        return out

    def successors(self, s: int) -> set:
        return {t for row in self.transitions[s] for t, _ in row}

    def reachable(self, start: Iterable[int] | None = None) -> set:
        todo = [s for s, p in self.initial if p > 0] if start is None else list(start)
        seen = set(todo)
        while todo:
            s = todo.pop()
            for t in self.successors(s):
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
        return seen

    def nominal(self) -> "Model":
        """Instantiation choosing interval midpoints, renormalized per row."""
        def mid(row):
            w = np.array([(e.lo + e.hi) / 2 for _, e in row])
            w = w / w.sum()
            return tuple((t, Point(float(p))) for (t, _), p in zip(row, w))
        trans = tuple(tuple(mid(r) for r in rows) for rows in self.transitions)
        return self.replace(transitions=trans, kind=POINT_KIND.get(self.kind, self.kind))

    def replace(self, **kw) -> "Model":
        d = dict(actions=self.actions, transitions=self.transitions, initial=self.initial,
                 labels=self.labels, obs=self.obs, rewards=self.rewards, kind=self.kind,
                 names=self.names)
        d.update(kw)
        return Model(**d)

    def structurally_equal(self, other: "Model") -> bool:
        return (self.actions == other.actions and self.transitions == other.transitions
                and _norm_init(self.initial) == _norm_init(other.initial)
                and self.labels == other.labels and self.obs == other.obs
                and self.rewards == other.rewards)

    # -- flattened choice arrays, used by the numerical engines ---------------
    def choice_arrays(self):
        """Return ``(state_of_choice, first_choice, succ, lo, hi, row_ptr)``.

        Choices are (state, action) pairs in state order; ``row_ptr`` delimits
        the successor entries of each choice in ``succ``/``lo``/``hi``.
        """
        c = self._cache.get("choices")
        if c is None:
            st, first, succ, lo, hi, ptr = [], [], [], [], [], [0]
            for s in range(self.n):
                first.append(len(st))
                for row in self.transitions[s]:
                    st.append(s)
                    for t, e in row:
                        succ.append(t)
                        lo.append(e.lo)
                        hi.append(e.hi)
                    ptr.append(len(succ))
            first.append(len(st))
            c = (np.array(st, dtype=np.int64), np.array(first, dtype=np.int64),
                 np.array(succ, dtype=np.int64), np.array(lo), np.array(hi),
                 np.array(ptr, dtype=np.int64))
            self._cache["choices"] = c
        return c

    def choice_rewards(self) -> np.ndarray:
        if self.rewards is None:
            return np.zeros(sum(len(a) for a in self.actions))
        return np.array([r for rs in self.rewards for r in rs], dtype=float)

    def point_matrix(self):
        """(choices x states) matrix of point probabilities; dense for small
        models, scipy CSR otherwise."""
        m = self._cache.get("pmat_any")
        if m is None:
            m = self.sparse_matrix()
            if m.shape[0] * m.shape[1] <= 250_000:
                m = m.toarray()
            self._cache["pmat_any"] = m
        return m

    def sparse_matrix(self):
        """Sparse (choices x states) matrix of point probabilities."""
        m = self._cache.get("pmat")
        if m is None:
            from scipy.sparse import csr_matrix
            if self.has_intervals:
                raise ModelError("point matrix requested for an interval model")
            _, _, succ, lo, _, ptr = self.choice_arrays()
            m = csr_matrix((lo, succ, ptr), shape=(len(ptr) - 1, self.n))
            self._cache["pmat"] = m
        return m


def _as_entry(p) -> ProbEntry:
    if isinstance(p, (Point, Interval)):
        return p
    if isinstance(p, (tuple, list)):
        return entry(float(p[0]), float(p[1]))
    return Point(float(p))


def _iter_rows(trans):
    for rows in trans:
        yield from rows


def _norm_init(init):
    return tuple(sorted((s, round(p, 12)) for s, p in init))


def _obs_support(z):
    if isinstance(z, Mapping):
        return [k for k, v in z.items() if v > 0]
    return [] if z is None else [z]


def _check_row(row: Row, n: int, where: str):
    if not row:
        raise ModelError(f"{where}: empty successor row")
    targets = [t for t, _ in row]
    if len(set(targets)) != len(targets):
        raise ModelError(f"{where}: duplicate successor")
    if any(not 0 <= t < n for t in targets):
        raise ModelError(f"{where}: successor out of range")
    if any(e.is_interval for _, e in row):
        slo = sum(e.lo for _, e in row)
        shi = sum(e.hi for _, e in row)
        if slo > 1 + PROB_TOL or shi < 1 - PROB_TOL:
            raise ModelError(f"{where}: interval budget infeasible "
                             f"(sum lo = {slo}, sum hi = {shi})")
    else:
        tot = sum(e.p for _, e in row)
        if abs(tot - 1.0) > PROB_TOL:
            raise ModelError(f"{where}: probabilities sum to {tot}")


# ---------------------------------------------------------------------------
# policies and controllers


def _check_dist(d: Mapping, where: str):
    if any(p < -PROB_TOL for p in d.values()):
        raise ModelError(f"{where}: negative probability")
    tot = sum(d.values())
    if abs(tot - 1.0) > PROB_TOL:
        raise ModelError(f"{where}: distribution sums to {tot}")


@dataclass(frozen=True)
class Policy:
    """Memoryless state-based policy: state -> {action: probability}.

    States absent from ``choice`` are undefined; deterministic policies carry
    Dirac distributions.
    """

    choice: Mapping[int, Mapping[str, float]]
    kind: str = "randomized"

    def __post_init__(self):
        for s, d in self.choice.items():
            _check_dist(d, f"policy at state {s}")

    @classmethod
    def deterministic(cls, assignment: Mapping[int, str]) -> "Policy":
        return cls({s: {a: 1.0} for s, a in assignment.items()}, kind="deterministic")

    @classmethod
    def observation_based(cls, model: Model, by_obs: Mapping) -> "Policy":
        if model.obs is None or not model.deterministic_obs:
            raise ModelError("observation-based policy needs deterministic observations")
        return cls({s: dict(by_obs[model.obs[s]]) for s in range(model.n)
                    if model.obs[s] in by_obs})

    def dist(self, s: int) -> Mapping[str, float]:
        try:
            return self.choice[s]
        except KeyError:
            raise ModelError(f"policy undefined at state {s}") from None

    def is_observation_based(self, model: Model) -> bool:
        by: dict = {}
        for s, d in self.choice.items():
            z = model.obs[s]
            ref = by.setdefault(z, d)
            keys = set(ref) | set(d)
            if any(abs(ref.get(a, 0.0) - d.get(a, 0.0)) > PROB_TOL for a in keys):
                return False
        return True


@dataclass(frozen=True)
class Fsc:
    """Finite-state controller with nodes ``0..n_nodes-1``.

    ``action_map[(node, z)]`` is a distribution over actions and
    ``memory_update[(node, z, action)]`` one over nodes.  Missing memory
    updates keep the current node.
    """

    n_nodes: int
    action_map: Mapping[tuple, Mapping[str, float]]
    memory_update: Mapping[tuple, Mapping[int, float]] = field(default_factory=dict)
    initial_node: int = 0

    def __post_init__(self):
        if self.n_nodes < 1 or not 0 <= self.initial_node < self.n_nodes:
            raise ModelError("FSC needs at least one node and a valid initial node")
        for k, d in self.action_map.items():
            _check_dist(d, f"action map at {k}")
        for k, d in self.memory_update.items():
            _check_dist(d, f"memory update at {k}")
            if any(not 0 <= m < self.n_nodes for m in d):
                raise ModelError(f"memory update at {k} targets unknown node")

    def act(self, node: int, z) -> Mapping[str, float]:
        try:
            return self.action_map[(node, z)]
        except KeyError:
            raise ModelError(f"FSC has no action for node {node}, observation {z!r}") from None

    def update(self, node: int, z, a: str) -> Mapping[int, float]:
        return self.memory_update.get((node, z, a), {node: 1.0})

    @classmethod
    def memoryless(cls, by_obs: Mapping) -> "Fsc":
        return cls(1, {(0, z): dict(d) for z, d in by_obs.items()})

    def check_compatible(self, model: Model):
        if model.obs is None:
            raise ModelError("FSC evaluation needs an observation function")
        allowed = {}
        for s in range(model.n):
            allowed[model.obs[s]] = set(model.actions[s])
        for (node, z), d in self.action_map.items():
            if z in allowed:
                bad = [a for a, p in d.items() if p > 0 and a not in allowed[z]]
                if bad:
                    raise ModelError(f"FSC node {node} picks {bad} not enabled under {z!r}")
        for z in allowed:
            for node in range(self.n_nodes):
                if (node, z) not in self.action_map:
                    raise ModelError(f"observation mismatch: no action for ({node}, {z!r})")


# ---------------------------------------------------------------------------
# specifications


@dataclass(frozen=True)
class Spec:
    """Reachability (``kind='reach'``) or expected-cost (``kind='cost'``) query.

    ``direction``/``threshold`` state the requirement, ``optimize`` whether the
    policy maximizes or minimizes; it defaults to the direction that helps
    satisfy the requirement.
    """

    kind: str
    targets: frozenset
    direction: str = ">="
    threshold: float | None = None
    optimize: str | None = None

    def __post_init__(self):
        if self.kind not in ("reach", "cost"):
            raise ModelError(f"unknown objective {self.kind!r}")
        if self.direction not in (">=", "<="):
            raise ModelError(f"unknown direction {self.direction!r}")
        if not self.targets:
            raise ModelError("target set must be non-empty")
        object.__setattr__(self, "targets", frozenset(int(t) for t in self.targets))
        if self.kind == "reach" and self.threshold is not None and not 0 <= self.threshold <= 1:
            raise ModelError("probability threshold outside [0, 1]")
        if self.optimize is None:
            object.__setattr__(self, "optimize", "max" if self.direction == ">=" else "min")
        if self.optimize not in ("max", "min"):
            raise ModelError(f"unknown optimization sense {self.optimize!r}")

    @classmethod
    def reach(cls, targets, threshold=None, direction=">=", optimize=None) -> "Spec":
        return cls("reach", frozenset(targets), direction, threshold, optimize)

    @classmethod
    def cost(cls, targets, threshold=None, direction="<=", optimize=None) -> "Spec":
        return cls("cost", frozenset(targets), direction, threshold, optimize)

    def holds(self, value: float, tol: float = 1e-9) -> bool | None:
        if self.threshold is None:
            return None
        if self.direction == ">=":
            return value >= self.threshold - tol
        return value <= self.threshold + tol

    @property
    def nature(self) -> str:
        """Adversarial sense of the uncertainty: it works against the requirement."""
        return "min" if self.direction == ">=" else "max"

    def check_states(self, n: int):
        if any(not 0 <= t < n for t in self.targets):
            raise ModelError("target set is not a subset of the states")


def uniform_policy(model: Model, states: Sequence[int] | None = None) -> Policy:
    states = range(model.n) if states is None else states
    return Policy({s: {a: 1.0 / len(model.actions[s]) for a in model.actions[s]} for s in states})
