"""Active perception: a depth-bounded tree over open-loop action sequences.

Every node carries the distribution over MDP states, the probability that the
DFA state has not moved, the expected entropy reduction over task-relevant
propositions, and the probability of getting back to the root within the
remaining action budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models.core import Model
from ..models.dfa import Dfa
from ..models.labels import BeliefLabeling, ObservationModel
from .belief import binary_entropy
from .product import ProductState

_TIE = 1e-12


@dataclass
class PerceptionNode:
    actions: tuple[str, ...]
    dist: np.ndarray
    stay: float
    gain: np.ndarray
    safety: float
    info: float
    score: float


def _action_matrices(mdp: Model) -> dict[str, np.ndarray]:
    """Dense transition matrix per action name; rows of states lacking it are zero."""
    out: dict[str, np.ndarray] = {}
    for s in range(mdp.n):
        for a, row in zip(mdp.actions[s], mdp.transitions[s]):
            M = out.setdefault(a, np.zeros((mdp.n, mdp.n)))
            for t, e in row:
                M[s, t] += e.p
    return out


def _enabled(mdp: Model) -> dict[str, np.ndarray]:
    en: dict[str, np.ndarray] = {}
    for s in range(mdp.n):
        for a in mdp.actions[s]:
            en.setdefault(a, np.zeros(mdp.n, dtype=bool))[s] = True
    return en


def return_probabilities(mats: dict[str, np.ndarray], root: int, horizon: int) -> np.ndarray:
    """R[k, s]: best probability of being at ``root`` within ``k`` steps from ``s``."""
    n = next(iter(mats.values())).shape[0]
    R = np.zeros((horizon + 1, n))
    R[0, root] = 1.0
    for k in range(1, horizon + 1):
        best = np.max(np.stack([M @ R[k - 1] for M in mats.values()]), axis=0)
        best[root] = 1.0
        R[k] = best
    return R


def reading_gain(belief: BeliefLabeling, obs_model: ObservationModel, x: int,
                 entries: list[tuple[int, int]]) -> np.ndarray:
    """Expected entropy reduction of one reading per entry taken from state ``x``."""
    out = np.zeros(len(entries))
    for k, (s, j) in enumerate(entries):
        if not obs_model.visible(x, s):
            continue
        p = belief.probs[s, j]
        name = belief.props[j]
        o_t, o_f = obs_model(x, s, name, True), obs_model(x, s, name, False)
        pt = p * o_t + (1 - p) * o_f
        h_after = 0.0
        if pt > 0:
            h_after += pt * binary_entropy(p * o_t / pt)
        if pt < 1:
            h_after += (1 - pt) * binary_entropy(p * (1 - o_t) / (1 - pt))
        out[k] = max(0.0, float(binary_entropy(p)) - h_after)
    return out


def active_perception_strategy(mdp: Model, dfa: Dfa, current: ProductState,
                               belief: BeliefLabeling, obs_model: ObservationModel,
                               cfg) -> list[str]:
    """Best-scoring node path followed by the most likely way back to the root.

    score = beta * safety + (1 - beta) * info, safety = P(DFA unchanged) *
    P(back at the root within the remaining budget), info = capped expected
    entropy reduction over task-relevant entries normalized by their current
    entropy.  Ties prefer shorter, then lexicographically smaller, sequences.
    """
    best = perception_tree(mdp, dfa, current, belief, obs_model, cfg)
    if not best.actions:
        return []
    return list(best.actions) + _return_suffix(mdp, current.state, best.dist,
                                               cfg.C_a - len(best.actions))


def perception_tree(mdp: Model, dfa: Dfa, current: ProductState, belief: BeliefLabeling,
                    obs_model: ObservationModel, cfg) -> PerceptionNode:
    root, q, depth = current.state, current.dfa_state, cfg.C_a
    mats, enabled = _action_matrices(mdp), _enabled(mdp)
    names = sorted(mats)
    relevant = [belief.index(p) for p in sorted(dfa.relevant_props(q)) if p in belief.props]
    entries = [(s, j) for s in range(mdp.n) for j in relevant
               if 0.0 < belief.probs[s, j] < 1.0]
    h0 = binary_entropy(np.array([belief.probs[s, j] for s, j in entries])) if entries \
        else np.zeros(0)
    h_tot = float(h0.sum())
    stay = np.array([dfa.transition_probs(q, belief.at(s)).get(q, 0.0) for s in range(mdp.n)])
    R = return_probabilities(mats, root, depth)
    gains: dict[int, np.ndarray] = {}

    def gain_at(x):
        if x not in gains:
            gains[x] = reading_gain(belief, obs_model, x, entries)
        return gains[x]

    d0 = np.zeros(mdp.n)
    d0[root] = 1.0
    beta = cfg.beta
    best = PerceptionNode((), d0, 1.0, np.zeros(len(entries)), 1.0, 0.0, beta)

    def better(node):
        if node.score > best.score + _TIE:
            return True
        if node.score < best.score - _TIE:
            return False
        return (len(node.actions), node.actions) < (len(best.actions), best.actions)

    stack = [best]
    while stack:
        node = stack.pop()
        k = len(node.actions)
        if k == depth:
            continue
        supp = node.dist > 0
        for a in names:
            if not enabled[a][supp].all():
                continue
            d = node.dist @ mats[a]
            p_stay = node.stay * float(d @ stay)
            g = node.gain.copy()
            for x in np.nonzero(d > 0)[0]:
                g += d[x] * gain_at(int(x))
            info = float(np.minimum(g, h0).sum() / h_tot) if h_tot > 0 else 0.0
            safety = p_stay * float(d @ R[depth - k - 1])
            child = PerceptionNode(node.actions + (a,), d, p_stay, g, safety, info,
                                   beta * safety + (1 - beta) * info)
            if better(child):
                best = child
            stack.append(child)
    return best


def _return_suffix(mdp: Model, root: int, dist: np.ndarray, budget: int) -> list[str]:
    """Greedy open-loop return towards the root from the modal state."""
    mats, enabled = _action_matrices(mdp), _enabled(mdp)
    names = sorted(mats)
    R = return_probabilities(mats, root, max(budget, 0))
    out = []
    d = dist.copy()
    for left in range(budget, 0, -1):
        if int(np.argmax(d)) == root:
            break
        supp = d > 0
        scores = [(float(d @ mats[a] @ R[left - 1]), -i) for i, a in enumerate(names)
                  if enabled[a][supp].all()]
        if not scores:
            break
        _, neg = max(scores)
        a = names[-neg]
        out.append(a)
        d = d @ mats[a]
    return out
