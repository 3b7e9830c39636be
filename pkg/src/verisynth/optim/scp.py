"""Shared pieces of the sequential convex programming loops."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping


@dataclass(frozen=True)
class ScpConfig:
    delta0: float = 1.0
    gamma: float = 1.5
    omega: float = 1e-4
    tau: float = 1e4
    eps_graph: float = 1e-6
    eps_pol: float = 1e-6
    max_iters: int = 200
    stop_on_satisfied: bool = True
    starts: int = 4  # policy SCP: uniform start plus seeded random starts
    seed: int = 0

    def __post_init__(self):
        for name in ("delta0", "omega", "tau", "eps_graph", "eps_pol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not (self.eps_graph < 0.1 and self.eps_pol < 0.1):
            raise ValueError("eps_graph and eps_pol must lie in (0, 0.1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.starts < 1:
            raise ValueError("starts must be positive")


def linearize_bilinear(d: float, c: float, y_hat: float, z_hat: float) -> Callable[[float, float], float]:
    """Tangent plane of h(y, z) = (2 d y + c) z at (y_hat, z_hat)."""
    def h_a(y, z):
        return 2 * d * (y_hat * z_hat + y_hat * (z - z_hat) + z_hat * (y - y_hat)) + c * z
    return h_a


def bilinear_coeffs(y_hat: float, z_hat: float) -> tuple[float, float, float]:
    """Coefficients (a_y, a_z, const) of the tangent of y*z at (y_hat, z_hat):
    y*z ~ z_hat*y + y_hat*z - y_hat*z_hat."""
    return z_hat, y_hat, -y_hat * z_hat


def trust_bounds(center: float, delta: float, lo: float = -math.inf,
                 hi: float = math.inf) -> tuple[float, float]:
    if center <= 0:
        raise ValueError(f"trust-region center {center} must be positive")
    if delta <= 0:
        raise ValueError("trust radius must be positive")
    dp = delta + 1.0
    a, b = max(center / dp, lo), min(center * dp, hi)
    if a > b:  # center outside [lo, hi]; fall back to the nearest bound
        a = b = min(max(center, lo), hi)
    return a, b


def trust_region_constraints(center: Mapping, delta: float, eps: float | None = None,
                             probability: Mapping | None = None) -> dict:
    """Per-variable box ``center/(delta+1) <= v <= center*(delta+1)``.

    Variables flagged in ``probability`` (default: all when ``eps`` is given)
    are additionally clamped to ``[eps, 1 - eps]``.
    """
    out = {}
    for k, v in center.items():
        is_prob = eps is not None and (probability is None or probability.get(k, False))
        lo, hi = (eps, 1.0 - eps) if is_prob else (-math.inf, math.inf)
        out[k] = trust_bounds(v, delta, lo, hi)
    return out


@dataclass(frozen=True)
class StepResult:
    accept: bool
    delta: float


def scp_step(beta: float, beta_best: float, delta: float, gamma: float,
             maximize: bool = True) -> StepResult:
    """Accept iff the checked objective strictly improves; grow or shrink delta."""
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    better = beta > beta_best if maximize else beta < beta_best
    return StepResult(True, delta * gamma) if better else StepResult(False, delta / gamma)
