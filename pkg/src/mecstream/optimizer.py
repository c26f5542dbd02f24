"""Per-step profile activation and spectator assignment.

Three allocators share one objective, the expected total profit (ETP): expected
horizon revenue of every spectator minus one step of transcoder and traffic
cost.

* ``smart_allocate`` maximizes ETP exactly. Once the per-player active profile
  sets are fixed the objective separates per spectator, so it enumerates the
  active sets and lets each spectator pick its best response.
* ``naive_allocate`` gives each spectator its best-QoE combination regardless of
  cost.
* ``exhaustive_oracle`` enumerates every complete assignment. Test scale only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .behavior import BehaviorParams
from .core import ContractError, NodeKind, PricingConfig, ProfileSpec, SessionConfig, Spectator
from .economics import (
    RevenueModel,
    combo_traffic_cost,
    expected_horizon_revenue,
    node_cost_step,
    traffic_cost_step,
)
from .qoe import ComboTable, DeliveredStream, effective_framerate, max_feasible_qoe, spectator_qoe

_TOL = 1e-9


@dataclass
class Problem:
    """Everything one allocation decision depends on."""

    spectators: Sequence[Spectator]
    profiles: Sequence[ProfileSpec]
    pricing: PricingConfig
    model: RevenueModel
    behavior: BehaviorParams
    remaining_steps: int
    players: int = 2
    gpu_limit: int = 6
    step_seconds: float = 10.0
    production_fps: float = 25.0
    screen_fraction: float = 0.03

    @classmethod
    def from_config(
        cls,
        config: SessionConfig,
        pricing: PricingConfig,
        spectators: Sequence[Spectator],
        remaining_steps: int,
    ) -> "Problem":
        return cls(
            spectators=spectators,
            profiles=config.profiles,
            pricing=pricing,
            model=RevenueModel.from_config(config),
            behavior=BehaviorParams.from_config(config),
            remaining_steps=remaining_steps,
            players=config.players,
            gpu_limit=config.gpu_limit,
            step_seconds=config.step_seconds,
            production_fps=config.production_fps,
            screen_fraction=config.screen_fraction,
        )

    @cached_property
    def table(self) -> ComboTable:
        bandwidth = np.array([s.bandwidth_now for s in self.spectators], dtype=float)
        decode = np.array(
            [[s.decode_now[p.name] for p in self.profiles] for s in self.spectators], dtype=float
        ).reshape(len(self.spectators), len(self.profiles))
        return ComboTable.build(
            bandwidth, decode, self.profiles, self.players, self.production_fps, self.screen_fraction
        )

    @cached_property
    def combos(self) -> list[tuple[int, ...]]:
        """Profile-index tuples in the flattened (C-order) layout of the table."""
        return list(itertools.product(range(len(self.profiles)), repeat=self.players))

    @cached_property
    def flat_qoe(self) -> np.ndarray:
        return np.nan_to_num(self.table.qoe.reshape(len(self.spectators), len(self.combos)), nan=-np.inf)

    @cached_property
    def flat_traffic(self) -> np.ndarray:
        t = self.table
        cost = combo_traffic_cost(t.frame_sum, t.fps, self.pricing, self.step_seconds)
        return np.nan_to_num(cost.reshape(len(self.spectators), len(self.combos)), nan=np.inf)

    @cached_property
    def flat_value(self) -> np.ndarray:
        """Expected horizon revenue minus this step's traffic, -inf where infeasible."""
        t = self.table
        rev = expected_horizon_revenue(
            t.qoe, self.remaining_steps, self.model, self.behavior,
            t.max_qoe.reshape((-1,) + (1,) * self.players),
        )
        value = rev - combo_traffic_cost(t.frame_sum, t.fps, self.pricing, self.step_seconds)
        return np.nan_to_num(value.reshape(len(self.spectators), len(self.combos)), nan=-np.inf)

    @cached_property
    def max_qoe(self) -> dict[int, float]:
        return {s.id: float(q) for s, q in zip(self.spectators, self.table.max_qoe)}

    def node_cost(self, active_idx: Sequence[Sequence[int]]) -> float:
        return node_cost_step(
            [[self.profiles[i] for i in player] for player in active_idx],
            self.pricing, self.step_seconds,
        )


@dataclass(frozen=True)
class Plan:
    active: tuple[frozenset[str], ...]
    assignment: Mapping[int, tuple[DeliveredStream, ...]]
    etp: float
    qoe: Mapping[int, float] = field(default_factory=dict)

    def combo(self, spectator_id: int) -> tuple[str, ...]:
        return tuple(d.profile.name for d in self.assignment[spectator_id])

    def gpu_count(self, profiles: Sequence[ProfileSpec]) -> int:
        gpu = {p.name for p in profiles if p.node_kind is NodeKind.GPU}
        return sum(len(a & gpu) for a in self.active)

    def traffic_streams(self):
        for streams in self.assignment.values():
            for d in streams:
                yield d.profile.frame_size, d.fps


def validate_plan(plan: Plan, problem: Problem) -> None:
    """Raise ContractError unless the plan satisfies every allocation constraint."""
    fps_max = problem.production_fps
    by_id = {s.id: s for s in problem.spectators}
    if set(plan.assignment) != set(by_id):
        raise ContractError("plan does not assign exactly the current spectators")
    consumed = [set() for _ in range(problem.players)]
    for sid, streams in plan.assignment.items():
        s = by_id[sid]
        if len(streams) != problem.players:
            raise ContractError(f"spectator {sid}: needs one profile per player")
        used = 0.0
        for k, d in enumerate(streams):
            consumed[k].add(d.profile.name)
            if not 0 < d.fps <= fps_max + _TOL:
                raise ContractError(f"spectator {sid}: fps {d.fps} out of range")
            if not 0 <= d.reduction_fraction < 1:
                raise ContractError(f"spectator {sid}: reduction fraction out of range")
            if abs(d.reduction_fraction - (1 - d.fps / fps_max)) > _TOL:
                raise ContractError(f"spectator {sid}: reduction fraction inconsistent with fps")
            if not d.profile.skippable and d.fps != fps_max:
                raise ContractError(f"spectator {sid}: video profile below production rate")
            if d.fps > s.decode_now[d.profile.name] + _TOL:
                raise ContractError(f"spectator {sid}: fps above decode capacity")
            used += d.profile.frame_size * d.fps
        if used > s.bandwidth_now * (1 + _TOL):
            raise ContractError(f"spectator {sid}: bandwidth exceeded")
    if [set(a) for a in plan.active] != consumed:
        raise ContractError("active profiles differ from consumed profiles")
    if plan.gpu_count(problem.profiles) > problem.gpu_limit:
        raise ContractError("GPU limit exceeded")


def evaluate_etp(plan: Plan, problem: Problem) -> float:
    """ETP of a plan, evaluated stream by stream without the vectorized tables."""
    validate_plan(plan, problem)
    revenue = 0.0
    for s in problem.spectators:
        qoe = spectator_qoe(plan.assignment[s.id], problem.screen_fraction)
        best = max_feasible_qoe(
            s, problem.profiles, problem.players, problem.production_fps, problem.screen_fraction
        )
        revenue += expected_horizon_revenue(
            qoe, problem.remaining_steps, problem.model, problem.behavior, best
        )
    by_name = {p.name: p for p in problem.profiles}
    node = node_cost_step(
        [[by_name[n] for n in a] for a in plan.active], problem.pricing, problem.step_seconds
    )
    traffic = traffic_cost_step(plan.traffic_streams(), problem.pricing, problem.step_seconds)
    return float(revenue - node - traffic)


# ---------------------------------------------------------------------------
# Plan construction from table indices


def _pick(score: np.ndarray, traffic: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Per-row argmax of score over allowed combos; ties to lower traffic, then lower index."""
    masked = np.where(allowed, score, -np.inf)
    best = masked.max(axis=1, keepdims=True)
    tied = (masked == best) & allowed
    return np.where(tied, traffic, np.inf).argmin(axis=1)


def _build_plan(problem: Problem, choice: np.ndarray) -> Plan:
    profiles = problem.profiles
    t = problem.table
    fps_flat = t.fps.reshape(len(problem.spectators), len(problem.combos))
    consumed = [set() for _ in range(problem.players)]
    assignment = {}
    qoe = {}
    value = 0.0
    for row, s in enumerate(problem.spectators):
        c = int(choice[row])
        fps = float(fps_flat[row, c])
        if math.isnan(fps):
            raise ContractError(f"spectator {s.id}: infeasible combination chosen")
        f = 1.0 - fps / problem.production_fps
        idx = problem.combos[c]
        assignment[s.id] = tuple(DeliveredStream(profiles[i], fps, f) for i in idx)
        for k, i in enumerate(idx):
            consumed[k].add(i)
        qoe[s.id] = float(problem.flat_qoe[row, c])
        value += float(problem.flat_value[row, c])
    etp = value - problem.node_cost(consumed)
    active = tuple(frozenset(profiles[i].name for i in player) for player in consumed)
    return Plan(active=active, assignment=assignment, etp=etp, qoe=qoe)


def _combo_mask(problem: Problem, per_player: np.ndarray) -> np.ndarray:
    """Flattened combo mask from a (players, profiles) boolean availability array."""
    mask = np.ones((), dtype=bool)
    for k in range(problem.players):
        mask = np.logical_and.outer(mask, per_player[k])
    return mask.reshape(-1)


# ---------------------------------------------------------------------------
# Best response


def best_response(
    problem: Problem,
    spectator: Spectator,
    active_sets: Sequence[set[str] | frozenset[str]],
) -> tuple[tuple[DeliveredStream, ...], float, float]:
    """Best combination for one spectator within the given per-player active sets.

    Free (untranscoded) profiles are always available. Returns the delivered
    streams, their expected horizon revenue and their traffic cost.
    """
    best_qoe = max_feasible_qoe(
        spectator, problem.profiles, problem.players, problem.production_fps, problem.screen_fraction
    )
    options = [
        [i for i, p in enumerate(problem.profiles) if p.is_free or p.name in active_sets[k]]
        for k in range(problem.players)
    ]
    best_key = None
    best = None
    for idx in itertools.product(*options):
        combo = [problem.profiles[i] for i in idx]
        delivered = effective_framerate(spectator, combo, problem.production_fps)
        if delivered is None:
            continue
        rev = expected_horizon_revenue(
            spectator_qoe(delivered, problem.screen_fraction),
            problem.remaining_steps, problem.model, problem.behavior, best_qoe,
        )
        traffic = traffic_cost_step(
            ((d.profile.frame_size, d.fps) for d in delivered), problem.pricing, problem.step_seconds
        )
        key = (-(rev - traffic), traffic, idx)
        if best_key is None or key < best_key:
            best_key, best = key, (delivered, float(rev), traffic)
    if best is None:
        raise ContractError(f"spectator {spectator.id}: no feasible combination")
    return best


# ---------------------------------------------------------------------------
# Allocators


def smart_allocate(problem: Problem) -> Plan:
    """Exact ETP maximization by enumerating per-player active-profile subsets.

    Every subset tuple within the GPU limit is scored as the sum of per-spectator
    best responses minus its node cost. A subset that contains unconsumed
    profiles is dominated by the subset of its consumed profiles, which is also
    enumerated, so the maximum is attained with active == consumed.
    """
    profiles = problem.profiles
    n, players = len(profiles), problem.players
    costed = [i for i, p in enumerate(profiles) if not p.is_free]
    subsets = list(itertools.product((False, True), repeat=len(costed)))
    a = len(subsets)
    allowed = np.array([[p.is_free for p in profiles]] * a)
    for row, bits in enumerate(subsets):
        for i, on in zip(costed, bits):
            allowed[row, i] = on
    sub_cost = np.array([
        problem.node_cost([[i for i, on in zip(costed, bits) if on]]) for bits in subsets
    ])
    sub_gpu = np.array([
        sum(on for i, on in zip(costed, bits) if profiles[i].node_kind is NodeKind.GPU)
        for bits in subsets
    ])

    s = len(problem.spectators)
    v = problem.flat_value.reshape((s,) + (n,) * players)
    for k in range(players - 1, -1, -1):
        vm = np.moveaxis(v, 1 + k, -1)[..., None, :]
        v = np.where(allowed, vm, -np.inf).max(axis=-1)
        v = np.moveaxis(v, -1, 1 + k)
    total = v.sum(axis=0) if s else np.zeros((a,) * players)

    cost = np.zeros((a,) * players)
    gpu = np.zeros((a,) * players, dtype=int)
    for k in range(players):
        shape = [1] * players
        shape[k] = a
        cost = cost + sub_cost.reshape(shape)
        gpu = gpu + sub_gpu.reshape(shape)
    score = np.where(gpu <= problem.gpu_limit, total - cost, -np.inf)
    best = np.unravel_index(int(np.argmax(score)), score.shape)
    if not np.isfinite(score[best]):
        raise ContractError("no feasible activation within the GPU limit")

    combo_ok = _combo_mask(problem, allowed[list(best)])
    choice = _pick(problem.flat_value, problem.flat_traffic, combo_ok[None, :])
    return _build_plan(problem, choice)


def naive_allocate(problem: Problem) -> Plan:
    """Best QoE for everyone, ignoring cost.

    Under a binding GPU limit, GPU profiles are banned one (player, profile) at a
    time, always the one whose loss costs the fewest total QoE, and affected
    spectators fall back to their best remaining option.
    """
    profiles = problem.profiles
    n, players = len(profiles), problem.players
    gpu_idx = [i for i, p in enumerate(profiles) if p.node_kind is NodeKind.GPU]
    avail = np.ones((players, n), dtype=bool)

    def assign(av):
        return _pick(problem.flat_qoe, problem.flat_traffic, _combo_mask(problem, av)[None, :])

    def active_gpu(choice):
        used = set()
        for c in choice:
            for k, i in enumerate(problem.combos[int(c)]):
                if i in gpu_idx:
                    used.add((k, i))
        return sorted(used)

    rows = np.arange(len(problem.spectators))
    choice = assign(avail)
    while True:
        used = active_gpu(choice)
        if len(used) <= problem.gpu_limit:
            break
        best = None
        for k, i in used:
            trial = avail.copy()
            trial[k, i] = False
            alt = assign(trial)
            loss = problem.flat_qoe[rows, choice].sum() - problem.flat_qoe[rows, alt].sum()
            if best is None or loss < best[0] - 1e-12:
                best = (loss, trial, alt)
        avail, choice = best[1], best[2]
    return _build_plan(problem, choice)


def exhaustive_oracle(problem: Problem, cap: int = 1_000_000) -> Plan:
    """Brute force over every complete assignment, using only the scalar models."""
    profiles = problem.profiles
    specs = problem.spectators
    size = len(profiles) ** (len(specs) * problem.players)
    if size > cap:
        raise ValueError(f"instance too large for the oracle: {size} assignments > cap {cap}")

    # Per spectator: every feasible combo with its revenue-minus-traffic.
    options = []
    for s in specs:
        best_qoe = max_feasible_qoe(
            s, profiles, problem.players, problem.production_fps, problem.screen_fraction
        )
        opts = []
        for idx in itertools.product(range(len(profiles)), repeat=problem.players):
            delivered = effective_framerate(s, [profiles[i] for i in idx], problem.production_fps)
            if delivered is None:
                continue
            rev = expected_horizon_revenue(
                spectator_qoe(delivered, problem.screen_fraction),
                problem.remaining_steps, problem.model, problem.behavior, best_qoe,
            )
            traffic = traffic_cost_step(
                ((d.profile.frame_size, d.fps) for d in delivered),
                problem.pricing, problem.step_seconds,
            )
            opts.append((idx, delivered, float(rev) - traffic))
        options.append(opts)

    gpu = {i for i, p in enumerate(profiles) if p.node_kind is NodeKind.GPU}
    best_score, best_pick = -math.inf, None
    for pick in itertools.product(*options):
        used = [set() for _ in range(problem.players)]
        for idx, _, _ in pick:
            for k, i in enumerate(idx):
                used[k].add(i)
        if sum(len(u & gpu) for u in used) > problem.gpu_limit:
            continue
        score = sum(v for _, _, v in pick) - problem.node_cost(used)
        if score > best_score:
            best_score, best_pick = score, (pick, used)
    if best_pick is None:
        raise ContractError("no feasible assignment within the GPU limit")

    pick, used = best_pick
    assignment = {s.id: delivered for s, (_, delivered, _) in zip(specs, pick)}
    qoe = {
        s.id: spectator_qoe(delivered, problem.screen_fraction)
        for s, (_, delivered, _) in zip(specs, pick)
    }
    active = tuple(frozenset(profiles[i].name for i in u) for u in used)
    plan = Plan(active=active, assignment=assignment, etp=0.0, qoe=qoe)
    return Plan(active=active, assignment=assignment, etp=evaluate_etp(plan, problem), qoe=qoe)


def allocate(problem: Problem, kind) -> Plan:
    from .core import OptimizerKind

    kind = OptimizerKind(kind)
    return smart_allocate(problem) if kind is OptimizerKind.SMART else naive_allocate(problem)
