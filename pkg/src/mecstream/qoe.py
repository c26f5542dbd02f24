"""Per-stream and per-spectator QoE from view PSNR and delivered frame rate."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ContractError, ProfileSpec, Spectator

DEFAULT_FPS = 25.0
DEFAULT_SCREEN_FRACTION = 0.03


@dataclass(frozen=True)
class DeliveredStream:
    profile: ProfileSpec
    fps: float
    reduction_fraction: float


def view_psnr(texture_psnr: float, screen_fraction: float = DEFAULT_SCREEN_FRACTION) -> float:
    """Offset texture PSNR to whole-view PSNR.

    Only ``screen_fraction`` of the pixels carry texture error, so view MSE is
    that fraction of texture MSE.
    """
    if screen_fraction <= 0:
        raise ValueError("screen_fraction must be positive")
    return texture_psnr - 10.0 * math.log10(screen_fraction)


def qoe_single(psnr, fr):
    """Cloud-gaming MOS fit, quadratic in PSNR and frame rate. Accepts arrays."""
    return (
        -8.97
        + 0.056 * fr
        + 0.41 * psnr
        - 0.0038 * psnr * psnr
        - 0.001 * fr * fr
        + 0.00079 * fr * psnr
    )


def effective_framerate(
    spectator: Spectator,
    combo: Sequence[ProfileSpec],
    production_fps: float = DEFAULT_FPS,
) -> tuple[DeliveredStream, ...] | None:
    """Deliver every player's stream at one common frame rate.

    Returns None when a non-skippable profile cannot be received at the
    production rate.
    """
    total_frame = sum(p.frame_size for p in combo)
    fps = min(
        production_fps,
        spectator.bandwidth_now / total_frame,
        min(spectator.decode_now[p.name] for p in combo),
    )
    if fps < production_fps and not all(p.skippable for p in combo):
        return None
    f = 1.0 - fps / production_fps
    return tuple(DeliveredStream(p, fps, f) for p in combo)


def spectator_qoe(
    delivered: Sequence[DeliveredStream], screen_fraction: float = DEFAULT_SCREEN_FRACTION
) -> float:
    vals = [qoe_single(view_psnr(d.profile.texture_psnr, screen_fraction), d.fps) for d in delivered]
    return sum(vals) / len(vals)


def max_feasible_qoe(
    spectator: Spectator,
    profiles: Sequence[ProfileSpec],
    players: int = 2,
    production_fps: float = DEFAULT_FPS,
    screen_fraction: float = DEFAULT_SCREEN_FRACTION,
) -> float:
    best = -math.inf
    for combo in itertools.product(profiles, repeat=players):
        delivered = effective_framerate(spectator, combo, production_fps)
        if delivered is not None:
            best = max(best, spectator_qoe(delivered, screen_fraction))
    if best == -math.inf:
        raise ContractError(f"spectator {spectator.id}: no feasible profile combination")
    return best


@dataclass
class ComboTable:
    """Vectorized QoE for every spectator and every per-player profile combination.

    Arrays are indexed ``[spectator, n_1, ..., n_K]`` over profile indices;
    infeasible combinations hold NaN in ``qoe`` and ``fps``.
    """

    fps: np.ndarray
    qoe: np.ndarray
    frame_sum: np.ndarray
    max_qoe: np.ndarray

    @classmethod
    def build(
        cls,
        bandwidth: np.ndarray,
        decode: np.ndarray,
        profiles: Sequence[ProfileSpec],
        players: int,
        production_fps: float = DEFAULT_FPS,
        screen_fraction: float = DEFAULT_SCREEN_FRACTION,
    ) -> "ComboTable":
        n = len(profiles)
        frame = np.array([p.frame_size for p in profiles])
        psnr = np.array([view_psnr(p.texture_psnr, screen_fraction) for p in profiles])
        strict = np.array([not p.skippable for p in profiles])
        s = bandwidth.shape[0]

        def axis(arr, k, lead=()):
            shape = list(lead) + [1] * players
            shape[len(lead) + k] = n
            return arr.reshape(shape)

        frame_sum = sum(axis(frame, k) for k in range(players))
        any_strict = np.zeros([n] * players, dtype=bool)
        for k in range(players):
            any_strict = any_strict | axis(strict, k)
        cap = np.full((s,) + (n,) * players, production_fps)
        for k in range(players):
            cap = np.minimum(cap, axis(decode, k, lead=(s,)))
        fps = np.minimum(cap, bandwidth.reshape((s,) + (1,) * players) / frame_sum)
        feasible = ~(any_strict & (fps < production_fps))
        qoe = sum(qoe_single(axis(psnr, k), fps) for k in range(players)) / players
        fps = np.where(feasible, fps, np.nan)
        qoe = np.where(feasible, qoe, np.nan)
        flat = qoe.reshape(s, n**players)
        if s and np.isnan(flat).all(axis=1).any():
            raise ContractError("spectator without any feasible profile combination")
        max_qoe = np.nanmax(flat, axis=1) if s else np.zeros(0)
        return cls(fps=fps, qoe=qoe, frame_sum=np.broadcast_to(frame_sum, fps.shape[1:]), max_qoe=max_qoe)
