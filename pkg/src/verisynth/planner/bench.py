"""Gridworld reach-avoid instances for the perception-planning loop."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..models.core import Model, ModelError
from ..models.dfa import Dfa, reach_avoid_dfa
from ..models.labels import BeliefLabeling, ObservationModel, grid_sensor

MOVES = {"down": (0, -1), "left": (-1, 0), "right": (1, 0), "up": (0, 1)}


def gridworld(width: int, height: int | None = None, slip: float = 0.0, start: int = 0) -> Model:
    """4-action grid; moves off the border stay put, with probability ``slip``
    the agent stays where it is instead of moving."""
    height = width if height is None else height
    if width < 1 or height < 1:
        raise ModelError("grid dimensions must be positive")
    if not 0.0 <= slip < 1.0:
        raise ModelError("slip probability must lie in [0, 1)")
    coords = grid_coords(width, height)
    rows = {}
    for s, (x, y) in enumerate(coords):
        for a, (dx, dy) in MOVES.items():
            nx, ny = x + dx, y + dy
            t = ny * width + nx if 0 <= nx < width and 0 <= ny < height else s
            if slip > 0 and t != s:
                rows[(s, a)] = [(t, 1.0 - slip), (s, slip)]
            else:
                rows[(s, a)] = [(t, 1.0)]
    names = [f"({x},{y})" for x, y in coords]
    return Model.build(width * height, rows, initial=start, kind="mdp", names=names)


def grid_coords(width: int, height: int) -> list[tuple[int, int]]:
    return [(x, y) for y in range(height) for x in range(width)]


def _connected(width: int, height: int, blocked: set, a: int, b: int) -> bool:
    seen, todo = {a}, deque([a])
    while todo:
        s = todo.popleft()
        if s == b:
            return True
        x, y = s % width, s // width
        for dx, dy in MOVES.values():
            nx, ny = x + dx, y + dy
            t = ny * width + nx
            if 0 <= nx < width and 0 <= ny < height and t not in blocked and t not in seen:
                seen.add(t)
                todo.append(t)
    return False


@dataclass
class ReachAvoidInstance:
    mdp: Model
    dfa: Dfa
    truth: list
    prior: BeliefLabeling
    sensor: ObservationModel
    goal: int
    obstacles: frozenset


def reach_avoid_instance(size: int = 8, density: float = 0.25, seed: int = 0,
                         prior_obs: float = 0.5, accuracy: float = 0.9, decay: float = 0.05,
                         radius: float = np.inf, max_tries: int = 1000) -> ReachAvoidInstance:
    """Random obstacles and target on a ``size x size`` grid, start at the corner.

    The goal location is known; every other cell carries an obstacle belief of
    ``prior_obs``.  Instances without an obstacle-free path are redrawn.
    """
    if size < 2:
        raise ModelError("reach-avoid grid needs size >= 2")
    rng = np.random.default_rng(seed)
    n = size * size
    for _ in range(max_tries):
        goal = int(rng.integers(1, n))
        obst = {s for s in range(1, n) if s != goal and rng.random() < density}
        if _connected(size, size, obst, 0, goal):
            break
    else:
        raise ModelError(f"no solvable instance in {max_tries} draws")
    truth = [frozenset(({"goal"} if s == goal else set()) | ({"obs"} if s in obst else set()))
             for s in range(n)]
    probs = np.zeros((n, 2))
    probs[goal, 0] = 1.0
    probs[:, 1] = prior_obs
    probs[[0, goal], 1] = 0.0
    prior = BeliefLabeling(("goal", "obs"), probs)
    sensor = grid_sensor(grid_coords(size, size), radius, accuracy, decay)
    return ReachAvoidInstance(gridworld(size), reach_avoid_dfa(), truth, prior, sensor, goal,
                              frozenset(obst))
