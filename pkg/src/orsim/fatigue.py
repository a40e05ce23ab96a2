"""Exponential fatigue growth for personnel, reused for material efficiency loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

PERSONNEL_SCALE_MAX = 5.0
MATERIAL_SCALE_MAX = 3.0


@dataclass(frozen=True)
class FatigueParams:
    a: float = 1.0
    k: float = 0.001
    fatigue_type: str = "sleep"
    scale_max: float = PERSONNEL_SCALE_MAX

    def __post_init__(self) -> None:
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"initial fatigue a must be positive, got {self.a}")
        if not math.isfinite(self.k):
            raise ValueError(f"growth constant k must be finite, got {self.k}")
        if not self.scale_max > 0:
            raise ValueError(f"scale_max must be positive, got {self.scale_max}")
        if self.a > self.scale_max:
            raise ValueError(f"a={self.a} exceeds scale_max={self.scale_max}")


def fatigue_at(p: FatigueParams, t: int) -> float:
    """Closed-form ``a * exp(k * t)``, saturated at ``p.scale_max``."""
    if t < 0:
        raise ValueError(f"cycle must be non-negative, got {t}")
    exponent = p.k * t
    # exp overflows near 709.78; anything that large is far past any scale top
    if exponent > 700.0:
        return p.scale_max
    value = p.a * math.exp(exponent)
    if not math.isfinite(value) or value > p.scale_max:
        return p.scale_max
    # strongly negative k underflows; keep the level strictly positive
    return value if value > 0.0 else math.ulp(0.0)


def step_fatigue(attributes: dict[str, float], attribute: str, params: FatigueParams, cycle: int) -> dict[str, float]:
    """Return a copy of ``attributes`` with ``attribute`` set to its fatigue level at ``cycle``."""
    updated = dict(attributes)
    updated[attribute] = fatigue_at(params, cycle)
    return updated
