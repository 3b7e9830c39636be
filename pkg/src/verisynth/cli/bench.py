"""Deterministic benchmark generators: restricted-vision grid, Maze(c), navigation."""
from __future__ import annotations

import numpy as np

from ..models.core import Model, ModelError

ACTIONS = {"down": (0, -1), "left": (-1, 0), "right": (1, 0), "up": (0, 1)}
_REL = {(-1, -1): "SW", (0, -1): "S", (1, -1): "SE", (-1, 0): "W", (1, 0): "E",
        (-1, 1): "NW", (0, 1): "N", (1, 1): "NE"}


def grid_pomdp(c: int) -> Model:
    """c x c grid, goal at the top right, uniform start, the agent only sees
    whether it is at the goal; one unit of cost per step."""
    if c < 1:
        raise ModelError("grid size must be at least 1")
    goal = c * c - 1
    rows, rew = {}, {}
    for s in range(c * c):
        x, y = s % c, s // c
        for a, (dx, dy) in ACTIONS.items():
            nx, ny = x + dx, y + dy
            t = ny * c + nx if 0 <= nx < c and 0 <= ny < c else s
            rows[(s, a)] = [(goal if s == goal else t, 1.0)]
            if s != goal:
                rew[(s, a)] = 1.0
    obs = {s: "goal" if s == goal else "grid" for s in range(c * c)}
    init = {s: 1.0 / (c * c) for s in range(c * c)}
    return Model.build(c * c, rows, initial=init, labels={goal: ["goal"]}, obs=obs,
                       rewards=rew or None, kind="pomdp",
                       names=[f"({s % c},{s // c})" for s in range(c * c)])


def maze_pomdp(c: int, slip: float = 0.1) -> Model:
    """Maze(c): a five-cell top corridor with three vertical corridors of c + 1
    cells below it; the middle one ends in the goal.  Observations are the
    wall patterns around the agent; the start is uniform over non-goal cells.

    State order follows the picture of Maze(1): top corridor left to right,
    then each lower row left to right.
    """
    if c < 1:
        raise ModelError("maze size must be at least 1")
    if not 0.0 <= slip < 0.5:
        raise ModelError("slip probability must lie in [0, 0.5)")
    cells = [(x, 0) for x in range(5)] + [(x, r) for r in range(1, c + 2) for x in (0, 2, 4)]
    index = {xy: i for i, xy in enumerate(cells)}
    goal = index[(2, c + 1)]
    n = len(cells)

    def move(s, a):
        x, y = cells[s]
        dx, dy = ACTIONS[a]
        t = index.get((x + dx, y - dy))  # y grows downwards here
        return s if t is None else t

    perp = {"up": ("left", "right"), "down": ("left", "right"),
            "left": ("up", "down"), "right": ("up", "down")}
    rows, rew = {}, {}
    for s in range(n):
        for a in ACTIONS:
            if s == goal:
                rows[(s, a)] = [(s, 1.0)]
                continue
            dist = {move(s, a): 1.0 - 2 * slip}
            if slip > 0:
                for b in perp[a]:
                    t = move(s, b)
                    dist[t] = dist.get(t, 0.0) + slip
            rows[(s, a)] = [(t, p) for t, p in dist.items() if p > 0]
            rew[(s, a)] = 1.0

    def walls(s):
        return "".join(k[0] for k in ACTIONS if move(s, k) == s)

    obs = {s: "goal" if s == goal else walls(s) for s in range(n)}
    init = {s: 1.0 / (n - 1) for s in range(n) if s != goal}
    return Model.build(n, rows, initial=init, labels={goal: ["goal"]}, obs=obs, rewards=rew,
                       kind="pomdp", names=[f"s{i}" for i in range(n)])


def navigation_pomdp(c: int, seed: int = 0) -> Model:
    """Agent from the bottom-left corner to the top-right one while a single
    obstacle moves uniformly at random (or stays).  The agent sees its own cell
    and the obstacle's relative position when it is one of the 8 neighbours."""
    if c < 1:
        raise ModelError("navigation grid needs size >= 1")
    rng = np.random.default_rng(seed)
    cells = [(x, y) for y in range(c) for x in range(c)]
    m = len(cells)
    goal_cell = m - 1
    o0 = int(rng.integers(1, m - 1)) if m > 2 else m - 1
    n = m * m + 2
    GOAL, CRASH = m * m, m * m + 1

    def step(cell, d):
        x, y = cells[cell]
        nx, ny = x + d[0], y + d[1]
        return ny * c + nx if 0 <= nx < c and 0 <= ny < c else cell

    obs_moves = [(0, 0)] + list(ACTIONS.values())
    rows, obs, labels, names = {}, {}, {GOAL: ["goal"], CRASH: ["crash"]}, []
    for s in range(m * m):
        ag, ob = divmod(s, m)
        nxt = {}
        for d in obs_moves:
            o2 = step(ob, d)
            nxt[o2] = nxt.get(o2, 0.0) + 1.0 / len(obs_moves)
        for a, d in ACTIONS.items():
            a2 = step(ag, d)
            dist = {}
            for o2, p in nxt.items():
                t = CRASH if a2 == o2 else GOAL if a2 == goal_cell else a2 * m + o2
                dist[t] = dist.get(t, 0.0) + p
            rows[(s, a)] = list(dist.items())
        (ax, ay), (ox, oy) = cells[ag], cells[ob]
        rel = _REL.get((ox - ax, oy - ay), "far")
        obs[s] = f"{ax},{ay},{rel}"
        names.append(f"a({ax},{ay})o({ox},{oy})")
    for s, z in ((GOAL, "goal"), (CRASH, "crash")):
        for a in ACTIONS:
            rows[(s, a)] = [(s, 1.0)]
        obs[s] = z
        names.append(z)
    init = GOAL if m == 1 else o0  # agent in cell 0
    return Model.build(n, rows, initial=init, labels=labels, obs=obs, kind="pomdp", names=names)


def generate_benchmark(kind: str, c: int, seed: int = 0) -> tuple[Model, str]:
    """Model plus a suggested specification string."""
    if c < 1:
        raise ModelError("benchmark size must be at least 1")
    if kind == "grid":
        return grid_pomdp(c), "cost <= 1e9 {goal} min"
    if kind == "maze":
        return maze_pomdp(c), "cost <= 1e9 {goal} min"
    if kind == "navigation":
        return navigation_pomdp(c, seed), "reach >= 0.9 {goal}"
    raise ModelError(f"unknown benchmark kind {kind!r}; choose grid, maze or navigation")
