from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


@dataclass
class SynthReport:
    status: str
    value: float
    instantiation: dict | None = None
    policy: object = None  # Policy or Fsc
    iterations: int = 0
    log: list = field(default_factory=list)  # dicts: iteration, value, delta, accepted
    delta: float = math.nan
    time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def accepted_values(self) -> list[float]:
        return [e["value"] for e in self.log if e["accepted"]]

    def to_dict(self) -> dict:
        from ..models.core import Fsc, Policy
        from ..models.io import fsc_to_dict, policy_to_dict

        d = {"status": self.status, "value": self.value, "iterations": self.iterations,
             "final_delta": self.delta, "wall_time": self.time, "log": self.log}
        if self.instantiation is not None:
            d["instantiation"] = self.instantiation
        if isinstance(self.policy, Fsc):
            d["fsc"] = fsc_to_dict(self.policy)
        elif isinstance(self.policy, Policy):
            d["policy"] = policy_to_dict(self.policy)
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=_jsonable)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "value", "delta", "accepted"])
        for e in self.log:
            w.writerow([e["iteration"], repr(e["value"]), repr(e["delta"]), int(e["accepted"])])
        return buf.getvalue()


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    return str(o)
