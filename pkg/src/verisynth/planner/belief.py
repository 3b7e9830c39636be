"""Belief maintenance over semantic labels: Bayes update, divergence, MAP."""
from __future__ import annotations

import hashlib
import warnings
from typing import Iterable, Sequence

import numpy as np

from ..models.core import ModelError
from ..models.labels import BeliefLabeling, ObservationModel

Reading = tuple[int, str, bool]


def bayes_update(belief: BeliefLabeling, obs_model: ObservationModel, agent_state: int,
                 readings: Iterable[Reading]) -> BeliefLabeling:
    """Posterior after the readings taken from ``agent_state``, one at a time."""
    probs = belief.probs.copy()
    for s, p, val in readings:
        j = belief.index(p)
        prior = probs[s, j]
        o_t = obs_model(agent_state, s, p, True)
        o_f = obs_model(agent_state, s, p, False)
        if val:
            num, alt = prior * o_t, (1.0 - prior) * o_f
        else:
            num, alt = prior * (1.0 - o_t), (1.0 - prior) * (1.0 - o_f)
        den = num + alt
        if den <= 0.0:
            warnings.warn(f"reading ({s}, {p!r}, {val}) has zero likelihood under the belief; "
                          "belief left unchanged", RuntimeWarning, stacklevel=2)
            continue
        probs[s, j] = num / den
    return belief.with_probs(np.clip(probs, 0.0, 1.0))


def sense(obs_model: ObservationModel, agent_state: int, truth: Sequence[frozenset],
          props: Sequence[str], rng: np.random.Generator) -> list[Reading]:
    """One reading per visible (state, proposition), drawn from the sensor model."""
    out = []
    for s in range(len(truth)):
        if not obs_model.visible(agent_state, s):
            continue
        for p in props:
            q = obs_model(agent_state, s, p, p in truth[s])
            out.append((s, p, bool(rng.random() < q)))
    return out


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    m = x > 0
    out[m] = x[m] * np.log2(x[m] / y[m])
    return out


def bernoulli_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Entrywise KL(Ber(p) || Ber(q)) in bits, with 0 log 0 = 0."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    return _xlogy(p, q) + _xlogy(1.0 - p, 1.0 - q)


def jsd(prior: BeliefLabeling, posterior: BeliefLabeling) -> float:
    """Jensen-Shannon divergence summed over all (state, proposition) entries, in bits."""
    if prior.props != posterior.props or prior.probs.shape != posterior.probs.shape:
        raise ModelError("beliefs are indexed over different states or propositions")
    a, b = prior.probs, posterior.probs
    # the mixture can round onto 0 or 1 while an endpoint does not
    m = np.clip(0.5 * (a + b), np.finfo(float).smallest_subnormal, np.nextafter(1.0, 0.0))
    return float(max(0.0, 0.5 * bernoulli_kl(a, m).sum() + 0.5 * bernoulli_kl(b, m).sum()))


def binary_entropy(p) -> np.ndarray:
    p = np.asarray(p, float)
    return -_xlogy(p, np.ones_like(p)) - _xlogy(1.0 - p, np.ones_like(p))


def map_labeling(belief: BeliefLabeling) -> list[frozenset]:
    """Most probable labeling; a proposition at probability exactly 0.5 is included."""
    keep = belief.probs >= 0.5
    return [frozenset(p for j, p in enumerate(belief.props) if keep[s, j])
            for s in range(belief.n_states)]


def belief_digest(belief: BeliefLabeling) -> str:
    return hashlib.sha256(np.ascontiguousarray(belief.probs).tobytes()).hexdigest()[:16]
