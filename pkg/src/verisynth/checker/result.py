from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..models.core import Policy
from ..models.io import policy_to_dict


@dataclass
class CheckResult:
    values: np.ndarray
    init_value: float
    satisfied: bool | None
    method: str
    iterations: int = 0
    time: float = 0.0
    policy: Policy | None = None
    stats: dict = field(default_factory=dict)

    def value(self, s: int) -> float:
        return float(self.values[s])

    def to_dict(self, with_policy: bool = False) -> dict:
        def num(x):
            return None if math.isinf(x) else float(x)
        d = {
            "init_value": num(self.init_value),
            "satisfied": self.satisfied,
            "method": self.method,
            "iterations": self.iterations,
            "wall_time": self.time,
            "values": [num(v) for v in self.values],
        }
        if self.stats:
            d["stats"] = self.stats
        if with_policy and self.policy is not None:
            d["policy"] = policy_to_dict(self.policy)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=1)
