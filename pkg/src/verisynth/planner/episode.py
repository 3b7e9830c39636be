"""The perception-planning loop and its traces."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..models.core import Model, ModelError
from ..models.dfa import Dfa
from ..models.labels import BeliefLabeling, ObservationModel
from .belief import bayes_update, belief_digest, jsd, map_labeling, sense
from .perception import active_perception_strategy
from .product import ProductState, TaskProduct, statistical_risk, synthesize_task_policy

# algorithm variants: (perceive, update, divergence test, active perception)
VARIANTS = {
    "no-perception": (False, False, False, False),
    "no-update": (True, False, False, False),
    "update": (True, True, False, False),
    "update-div": (True, True, True, False),
    "update-info": (True, True, False, True),
    "update-div-info": (True, True, True, True),
}


@dataclass(frozen=True)
class PlannerConfig:
    gamma_d: float = 0.25  # divergence threshold, bits
    gamma_r: float = 0.1  # risk threshold
    N: int = 100  # risk samples
    C_a: int = 2  # perception tree depth
    beta: float = 0.5  # safety vs information
    seed: int = 0
    max_steps: int = 50
    perceive: bool = True
    update: bool = True
    divergence: bool = True
    active: bool = True
    eps: float = 0.1  # Hoeffding band reported with each risk estimate

    def __post_init__(self):
        if self.gamma_d < 0 or self.gamma_r < 0:
            raise ValueError("thresholds must be non-negative")
        if self.C_a < 1:
            raise ValueError("perception depth C_a must be at least 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.N < 1 or self.max_steps < 0:
            raise ValueError("need N >= 1 and max_steps >= 0")

    @classmethod
    def variant(cls, name: str, **kw) -> "PlannerConfig":
        try:
            perceive, update, div, active = VARIANTS[name]
        except KeyError:
            raise ValueError(f"unknown planner variant {name!r}; "
                             f"choose from {sorted(VARIANTS)}") from None
        return cls(perceive=perceive, update=update, divergence=div, active=active, **kw)

    @property
    def replans(self) -> bool:
        return self.perceive


@dataclass
class EpisodeTrace:
    records: list = field(default_factory=list)
    outcome: str = "running"
    steps: int = 0
    plans: int = 0
    perception_strategies: int = 0

    def append(self, rec: dict):
        if self.outcome != "running":
            raise ModelError("trace is closed")
        self.records.append(rec)

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def summary(self) -> dict:
        return {"outcome": self.outcome, "success": self.success, "steps": self.steps,
                "plans": self.plans, "perception_strategies": self.perception_strategies}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _draw_next(mdp: Model, s: int, a: str, rng) -> int:
    row = mdp.transitions[s][mdp.action_index(s, a)]
    p = np.array([e.p for _, e in row])
    return int(row[int(rng.choice(len(row), p=p / p.sum()))][0])


def run_episode(mdp: Model, dfa: Dfa, ground_truth: Sequence[frozenset],
                obs_model: ObservationModel, prior: BeliefLabeling,
                cfg: PlannerConfig | None = None) -> EpisodeTrace:
    """Observe, update, test divergence, replan, assess risk, perceive or act,
    until the task is accepted, becomes impossible, or the step cap is hit."""
    cfg = cfg or PlannerConfig()
    if len(ground_truth) != mdp.n or prior.n_states != mdp.n:
        raise ModelError("labelings must cover every MDP state")
    rng = np.random.default_rng(cfg.seed)
    prod = TaskProduct(mdp, dfa)
    live = dfa.coaccessible()
    s = mdp.initial_state
    q = dfa.step(dfa.init, ground_truth[s])
    belief, plan, pending = prior, None, []
    perceived = set()  # product states where a perception strategy already ran
    trace = EpisodeTrace()
    t = 0
    while True:
        readings = []
        if cfg.perceive:
            readings = sense(obs_model, s, ground_truth, prior.props, rng)
            base = belief if cfg.update else prior
            new = bayes_update(base, obs_model, s, readings)
        else:
            new = belief
        div = jsd(belief, new)
        belief = new
        here = ProductState(s, q, q in dfa.accepting)
        if q in dfa.accepting:
            outcome = "success"
        elif q not in live:
            outcome = "failure"
        elif t >= cfg.max_steps:
            outcome = "timeout"
        else:
            outcome = None
        replan = plan is None or (outcome is None and not pending and cfg.replans
                                  and (not cfg.divergence or div > cfg.gamma_d))
        risk = None
        if replan:
            labels = map_labeling(belief)
            plan = synthesize_task_policy(mdp, dfa, labels, here, prod)
            trace.plans += 1
            if cfg.active and outcome is None and here not in perceived:
                rep = statistical_risk(mdp, dfa, plan, belief, cfg.N,
                                       seed=int(rng.integers(2**63)), eps=cfg.eps, start=here,
                                       map_labels=labels)
                risk = rep.risk
                if risk > cfg.gamma_r:
                    perceived.add(here)
                    pending = active_perception_strategy(mdp, dfa, here, belief, obs_model, cfg)
                    if pending:
                        trace.perception_strategies += 1
        rec = {"t": t, "state": s, "dfa_state": q, "readings": [list(r) for r in readings],
               "belief": belief_digest(belief), "divergence": div, "replan": replan,
               "risk": risk, "plan_value": plan.value if replan else None}
        if outcome is not None:
            rec["action"] = None
            rec["outcome"] = outcome
            trace.append(rec)
            trace.outcome, trace.steps = outcome, t
            return trace
        perceiving = bool(pending)
        a = pending.pop(0) if pending else plan.action(here)
        if a not in mdp.actions[s]:
            pending, a = [], plan.action(here)
            perceiving = False
        rec["action"], rec["perception"] = a, perceiving
        trace.append(rec)
        s = _draw_next(mdp, s, a, rng)
        q = dfa.step(q, ground_truth[s])
        t += 1


def summarize(traces: Sequence[EpisodeTrace]) -> dict:
    n = len(traces)
    if n == 0:
        raise ValueError("no episodes to summarize")
    return {"episodes": n,
            "success": sum(tr.success for tr in traces) / n,
            "steps": sum(tr.steps for tr in traces) / n,
            "plans": sum(tr.plans for tr in traces) / n}


def summary_csv(rows: dict) -> str:
    """CSV with one line per variant: Success / #Step / #Plan."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "episodes", "success", "steps", "plans"])
    for name, r in rows.items():
        w.writerow([name, r["episodes"], f"{r['success']:.4f}", f"{r['steps']:.4f}",
                    f"{r['plans']:.4f}"])
    return buf.getvalue()

