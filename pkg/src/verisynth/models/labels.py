from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ModelError


@dataclass(frozen=True, eq=False)
class BeliefLabeling:
    """Independent Bernoulli belief ``probs[s, i]`` that prop ``props[i]`` holds at ``s``."""

    props: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[1] != len(self.props):
            raise ModelError("belief array must have shape (n_states, n_props)")
        if np.any(p < 0) or np.any(p > 1):
            raise ModelError("belief parameters must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int, props: Sequence[str], value: float = 0.5) -> "BeliefLabeling":
        return cls(tuple(props), np.full((n, len(props)), value))

    @classmethod
    def from_labels(cls, labels: Sequence, props: Sequence[str]) -> "BeliefLabeling":
        arr = np.array([[1.0 if p in lab else 0.0 for p in props] for lab in labels])
        return cls(tuple(props), arr.reshape(len(labels), len(props)))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    def index(self, p: str) -> int:
        return self.props.index(p)

    def prob(self, s: int, p: str) -> float:
        return float(self.probs[s, self.index(p)])

    def joint(self, s: int, subset: Sequence[str]) -> float:
        """Probability that every proposition in ``subset`` holds at ``s``."""
        return float(np.prod([self.probs[s, self.index(p)] for p in subset]))

    def at(self, s: int) -> dict[str, float]:
        return {p: float(self.probs[s, i]) for i, p in enumerate(self.props)}

    def with_probs(self, probs: np.ndarray) -> "BeliefLabeling":
        return BeliefLabeling(self.props, probs)

    def sample(self, rng: np.random.Generator) -> list[frozenset]:
        draws = rng.random(self.probs.shape) < self.probs
        return [frozenset(p for i, p in enumerate(self.props) if draws[s, i])
                for s in range(self.n_states)]

    def uncertain_entries(self, tol: float = 0.0) -> list[tuple[int, int]]:
        return [tuple(ix) for ix in np.argwhere((self.probs > tol) & (self.probs < 1 - tol))]


@dataclass(frozen=True)
class ObservationModel:
    """Sensor model: ``prob_true(s1, s2, p, b)`` is the probability that sensing
    from ``s1`` reports proposition ``p`` true at ``s2`` when its truth is ``b``.

    ``visible(s1, s2)`` restricts which cells produce a reading at all.
    """

    fn: Callable[[int, int, str, bool], float]
    visible: Callable[[int, int], bool] = field(default=lambda s1, s2: True)

    def prob_true(self, s1: int, s2: int, p: str, b: bool) -> float:
        v = float(self.fn(s1, s2, p, b))
        if not 0.0 <= v <= 1.0:
            raise ModelError(f"observation probability {v} outside [0, 1]")
        return v

    def __call__(self, s1, s2, p, b):
        return self.prob_true(s1, s2, p, b)


def constant_sensor(true_pos: float, false_pos: float) -> ObservationModel:
    """Same accuracy everywhere: P(report True | True) and P(report True | False)."""
    return ObservationModel(lambda s1, s2, p, b: true_pos if b else false_pos)


def grid_sensor(coords: Sequence[tuple[int, int]], radius: float, accuracy: float = 0.95,
                decay: float = 0.1) -> ObservationModel:
    """Range-limited sensor on a grid whose accuracy decays with Chebyshev distance."""
    xy = np.asarray(coords)

    def dist(s1, s2):
        return float(np.max(np.abs(xy[s1] - xy[s2])))

    def fn(s1, s2, p, b):
        acc = max(0.5, accuracy - decay * dist(s1, s2))
        return acc if b else 1.0 - acc

    return ObservationModel(fn, lambda s1, s2: dist(s1, s2) <= radius)
