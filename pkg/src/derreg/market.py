"""
Regulation market revenue from offered capacity and performance score.

Two modes: clearing prices per MW per day (credit = MW x score x price), or
daily credits taken as given.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from derreg.metrics import ELIGIBILITY

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class MarketInputs:
    capacity_kw: float
    score: float
    capability_price: float | None = None  # currency per MW per day
    performance_price: float | None = None
    capability_credit: float | None = None  # direct daily credits
    performance_credit: float | None = None

    def __post_init__(self):
        if not self.capacity_kw > 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")
        for name in ("capability_price", "performance_price", "capability_credit", "performance_credit"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        direct = self.capability_credit is not None and self.performance_credit is not None
        priced = self.capability_price is not None and self.performance_price is not None
        if not (direct or priced):
            raise ValueError("give both prices or both direct credits")

    @property
    def direct(self) -> bool:
        return self.capability_credit is not None and self.performance_credit is not None


def daily_credits(inputs: MarketInputs) -> tuple[float, float]:
    """(capability, performance) credits for one day."""
    if inputs.direct:
        return float(inputs.capability_credit), float(inputs.performance_credit)
    mw = inputs.capacity_kw / 1000.0
    return mw * inputs.score * inputs.capability_price, mw * inputs.score * inputs.performance_price


def annual_revenue(daily_capability: float, daily_performance: float) -> float:
    if daily_capability < 0 or daily_performance < 0:
        raise ValueError("credits must be nonnegative")
    return (daily_capability + daily_performance) * DAYS_PER_YEAR


def estimate_revenue(inputs: MarketInputs) -> dict:
    """Daily credits and annual revenue, zeroed when the score is below eligibility."""
    cap, perf = daily_credits(inputs)
    eligible = inputs.score >= ELIGIBILITY
    if not eligible:
        log.warning("performance score %.3f below %.2f: not eligible, revenue set to 0", inputs.score, ELIGIBILITY)
        cap = perf = 0.0
    return {
        "eligible": eligible,
        "capability": cap,
        "performance": perf,
        "annual": annual_revenue(cap, perf),
    }
