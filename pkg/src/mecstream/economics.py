"""Revenue models, expected horizon revenue, node and traffic costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .behavior import BehaviorParams, quit_probability
from .core import KB_PER_GB, PricingConfig, ProfileSpec, RevenueKind, SessionConfig


@dataclass(frozen=True)
class RevenueModel:
    kind: RevenueKind = RevenueKind.CONSTANT
    coefficient: float = 0.01

    def __post_init__(self):
        if self.coefficient <= 0:
            raise ValueError("revenue coefficient must be positive")

    @classmethod
    def from_config(cls, config: SessionConfig) -> "RevenueModel":
        return cls(config.revenue_model, config.revenue_rate)


def revenue_rate(qoe, model: RevenueModel):
    """Per-step revenue of one active spectator. Accepts arrays."""
    if model.kind is RevenueKind.CONSTANT:
        return np.full(np.shape(qoe), model.coefficient) if np.ndim(qoe) else model.coefficient
    if model.kind is RevenueKind.LINEAR:
        return model.coefficient * qoe
    return model.coefficient / (1.0 + np.exp(-qoe))


def survival_sum(q, horizon):
    """sum_{j=1..H} (1-q)^j, stable near q = 0. Accepts arrays."""
    q = np.asarray(q, dtype=float)
    horizon = np.asarray(horizon, dtype=float)
    p = 1.0 - q
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = p * -np.expm1(horizon * np.log1p(-q)) / q
    out = np.where(q > 0, closed, horizon)
    out = np.where(q >= 1, 0.0, out)
    return out if out.ndim else float(out)


def expected_horizon_revenue(
    qoe,
    remaining_steps,
    model: RevenueModel,
    behavior: BehaviorParams,
    max_qoe,
):
    """Expected revenue until session end if the current QoE persists.

    Survival is applied for every step from now through the consumption step,
    so the first step already carries one factor of (1 - q).
    """
    dqoe = np.maximum(np.asarray(max_qoe) - np.asarray(qoe), 0.0)
    q = quit_probability(dqoe, behavior)
    return revenue_rate(qoe, model) * survival_sum(q, remaining_steps)


def node_cost_step(
    active: Iterable[Iterable[ProfileSpec]], pricing: PricingConfig, step_seconds: float
) -> float:
    """Cost of one step of transcoders; ``active`` holds per-player profile sets."""
    return sum(
        pricing.node_rate(p.node_kind) * step_seconds for player in active for p in player
    )


def traffic_cost_step(
    streams: Iterable[tuple[float, float]], pricing: PricingConfig, step_seconds: float
) -> float:
    """Traffic cost of delivered ``(frame_size_kb, fps)`` streams over one step."""
    kb = sum(size * fps for size, fps in streams) * step_seconds
    return kb / KB_PER_GB * pricing.traffic_rate


def combo_traffic_cost(
    frame_sum, fps, pricing: PricingConfig, step_seconds: float
):
    """Traffic cost of one spectator's combination: every stream shares ``fps``."""
    return frame_sum * fps * step_seconds / KB_PER_GB * pricing.traffic_rate
