"""Qualitative (graph-based) reachability analysis.

Interval entries have strictly positive lower bounds, so the underlying graph
is the same for every instantiation and these sets are instantiation-free.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..models.core import Model, ModelError


def _mask(n: int, states: Iterable[int]) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    idx = list(states)
    if idx:
        m[idx] = True
    return m


def targets_mask(model: Model, T) -> np.ndarray:
    T = list(T)
    if not T:
        raise ModelError("target set must be non-empty")
    if any(not 0 <= t < model.n for t in T):
        raise ModelError("target set is not a subset of the states")
    return _mask(model.n, T)


def _reverse(model: Model):
    r = model._cache.get("reverse")
    if r is None:
        st, _, succ, _, _, ptr = model.choice_arrays()
        src = np.repeat(st, np.diff(ptr))
        order = np.argsort(succ, kind="stable")
        r = (src[order], np.searchsorted(succ[order], np.arange(model.n + 1)))
        model._cache["reverse"] = r
    return r


def backward_reach(model: Model, start: np.ndarray, through: np.ndarray | None = None) -> np.ndarray:
    """States with a path into ``start`` whose intermediate states lie in ``through``."""
    src, ptr = _reverse(model)
    seen = start.copy()
    todo = list(np.nonzero(start)[0])
    while todo:
        t = todo.pop()
        for s in src[ptr[t]:ptr[t + 1]]:
            if not seen[s] and (through is None or through[s]):
                seen[s] = True
                todo.append(s)
    return seen


def _choice_all(model: Model, inside: np.ndarray) -> np.ndarray:
    """Per choice: every successor lies in ``inside``."""
    _, _, succ, _, _, ptr = model.choice_arrays()
    return np.minimum.reduceat(inside[succ].astype(np.int8), ptr[:-1]).astype(bool)


def _choice_any(model: Model, inside: np.ndarray) -> np.ndarray:
    _, _, succ, _, _, ptr = model.choice_arrays()
    return np.maximum.reduceat(inside[succ].astype(np.int8), ptr[:-1]).astype(bool)


def _state_any(model: Model, per_choice: np.ndarray) -> np.ndarray:
    _, first, *_ = model.choice_arrays()
    return np.maximum.reduceat(per_choice.astype(np.int8), first[:-1]).astype(bool)


def prob0A(model: Model, T) -> np.ndarray:
    """States reaching ``T`` with probability 0 under every policy."""
    return ~backward_reach(model, targets_mask(model, T))


def prob0E(model: Model, T) -> np.ndarray:
    """States from which some policy avoids ``T`` almost surely."""
    x = ~targets_mask(model, T)
    while True:
        nxt = x & _state_any(model, _choice_all(model, x))
        if np.array_equal(nxt, x):
            return x
        x = nxt


def prob1A(model: Model, T) -> np.ndarray:
    """States reaching ``T`` with probability 1 under every policy."""
    t = targets_mask(model, T)
    bad = backward_reach(model, prob0E(model, T), through=~t)
    return ~bad


def prob1E(model: Model, T) -> np.ndarray:
    """States reaching ``T`` with probability 1 under some policy."""
    t = targets_mask(model, T)
    u = np.ones(model.n, dtype=bool)
    while True:
        inside = _choice_all(model, u)
        r = t.copy()
        while True:
            nxt = r | _state_any(model, inside & _choice_any(model, r))
            if np.array_equal(nxt, r):
                break
            r = nxt
        if np.array_equal(r, u):
            return u
        u = r


def prob0_and_reach_sets(model: Model, T) -> dict:
    t = targets_mask(model, T)
    return {"no_reach": set(np.nonzero(prob0A(model, T))[0].tolist()),
            "T": set(np.nonzero(t)[0].tolist())}
