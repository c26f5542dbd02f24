"""Spectator population dynamics: Poisson arrivals and QoE-driven quitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ClassSampler, SessionConfig, Spectator


@dataclass(frozen=True)
class BehaviorParams:
    arrival_rate: float = 0.5
    quit_base: float = 0.0037
    quit_qoe_factor: float = 0.20

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be >= 0")
        if not 0 <= self.quit_base < 1:
            raise ValueError("quit_base must be in [0, 1)")
        if self.quit_qoe_factor < 0:
            raise ValueError("quit_qoe_factor must be >= 0")

    @classmethod
    def from_config(cls, config: SessionConfig) -> "BehaviorParams":
        return cls(config.arrival_rate, config.quit_base, config.quit_qoe_factor)


def sample_arrivals(rate: float, rng: np.random.Generator) -> int:
    """Poisson draw by inversion: multiply uniforms until the product drops below e^-rate."""
    if rate < 0:
        raise ValueError("arrival rate must be >= 0")
    if rate == 0:
        return 0
    limit = math.exp(-rate)
    k = 0
    prod = rng.random()
    while prod > limit:
        k += 1
        prod *= rng.random()
    return k


def quit_probability(dqoe, params: BehaviorParams):
    return np.minimum(1.0, params.quit_base + dqoe * params.quit_qoe_factor)


def retention_probability(q_sequence: Iterable[float]) -> float:
    return math.prod(1.0 - q for q in q_sequence)


def quit_b_for_session(p_quit: float, steps: int = 60) -> float:
    """Per-step base quit probability giving ``p_quit`` cumulative over ``steps``."""
    return 1.0 - (1.0 - p_quit) ** (1.0 / steps)


def sample_quits(
    spectators: Sequence[Spectator],
    params: BehaviorParams,
    rng: np.random.Generator | Callable[[Spectator], np.random.Generator],
) -> set[int]:
    """Independent per-spectator quit draws.

    ``rng`` is either one shared stream or a callable returning a dedicated
    stream per spectator.
    """
    quits = set()
    for s in spectators:
        gen = rng(s) if callable(rng) else rng
        if gen.random() < quit_probability(s.dqoe_now, params):
            quits.add(s.id)
    return quits


class SpectatorFactory:
    """Creates spectators with strictly increasing ids."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.sampler = ClassSampler(config.device_classes, config.population_weights)
        self.next_id = 0

    def spawn(self, rng: np.random.Generator, step: int) -> Spectator:
        device = self.sampler(rng)
        spectator = Spectator(
            id=self.next_id,
            device=device,
            bandwidth_now=device.base_bandwidth,
            decode_now=dict(device.decode_cap),
            join_step=step,
        )
        self.next_id += 1
        return spectator


def spawn_spectator(factory: SpectatorFactory, rng: np.random.Generator, step: int = 0) -> Spectator:
    return factory.spawn(rng, step)
