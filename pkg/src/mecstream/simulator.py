"""Discrete-time streaming session loop.

Each step: fluctuate spectator conditions, re-optimize the allocation, accrue
realized revenue and costs, sample quits from the delivered QoE gap, then sample
arrivals (who are first served in the following step).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .behavior import BehaviorParams, SpectatorFactory, sample_arrivals, sample_quits
from .core import ContractError, OptimizerKind, PricingConfig, SessionConfig, Spectator
from .economics import RevenueModel, node_cost_step, revenue_rate, traffic_cost_step
from .optimizer import Plan, Problem, naive_allocate, smart_allocate

# Named substreams of the session seed.
ARRIVALS, QUITS, FLUCTUATIONS = 0, 1, 2

CSV_COLUMNS = [
    "step", "spectators", "arrivals", "quits", "revenue", "node_cost", "traffic_cost",
    "profit", "mean_qoe", "mean_dqoe", "active_profiles_p1", "active_profiles_p2",
]


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class StepMetrics:
    step: int
    spectators: int
    revenue: float
    node_cost: float
    traffic_cost: float
    profit: float
    mean_qoe: float
    mean_dqoe: float
    active_profiles: tuple[tuple[str, ...], ...]
    arrivals: int
    quits: int

    def __post_init__(self):
        if self.profit != self.revenue - self.node_cost - self.traffic_cost:
            raise ContractError("profit must equal revenue minus costs")
        if min(self.spectators, self.arrivals, self.quits) < 0:
            raise ContractError("negative count in step metrics")


@dataclass
class SessionTrace:
    config: SessionConfig
    pricing: PricingConfig
    optimizer: OptimizerKind
    seed: int
    steps: list[StepMetrics] = field(default_factory=list)
    # Smart ETP minus Naive ETP on each step's decision, when requested.
    etp_gaps: list[float] = field(default_factory=list)

    def _sum(self, name: str) -> float:
        return math.fsum(getattr(m, name) for m in self.steps)

    @property
    def revenue(self) -> float:
        return self._sum("revenue")

    @property
    def node_cost(self) -> float:
        return self._sum("node_cost")

    @property
    def traffic_cost(self) -> float:
        return self._sum("traffic_cost")

    @property
    def profit(self) -> float:
        return self._sum("profit")

    @property
    def mean_spectators(self) -> float:
        return self._sum("spectators") / len(self.steps) if self.steps else 0.0

    @property
    def total_qoe(self) -> float:
        """Sum of spectators' QoE, averaged over steps."""
        if not self.steps:
            return 0.0
        return math.fsum(m.mean_qoe * m.spectators for m in self.steps) / len(self.steps)

    @property
    def mean_qoe(self) -> float:
        """QoE averaged over all spectator-steps."""
        n = self._sum("spectators")
        return math.fsum(m.mean_qoe * m.spectators for m in self.steps) / n if n else 0.0

    @property
    def mean_dqoe(self) -> float:
        n = self._sum("spectators")
        return math.fsum(m.mean_dqoe * m.spectators for m in self.steps) / n if n else 0.0

    def totals(self) -> dict:
        return {
            "optimizer": self.optimizer.value,
            "seed": self.seed,
            "steps": len(self.steps),
            "revenue": self.revenue,
            "node_cost": self.node_cost,
            "traffic_cost": self.traffic_cost,
            "profit": self.profit,
            "mean_spectators": self.mean_spectators,
            "mean_qoe": self.mean_qoe,
            "mean_dqoe": self.mean_dqoe,
            "total_qoe": self.total_qoe,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for m in self.steps:
            active = [";".join(a) for a in m.active_profiles]
            active += [""] * (2 - len(active))
            writer.writerow([
                m.step, m.spectators, m.arrivals, m.quits, repr(m.revenue), repr(m.node_cost),
                repr(m.traffic_cost), repr(m.profit), repr(m.mean_qoe), repr(m.mean_dqoe),
                *active,
            ])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        steps_path, summary_path = out / "steps.csv", out / "summary.json"
        steps_path.write_text(self.to_csv())
        summary_path.write_text(json.dumps(self.totals(), indent=2) + "\n")
        return steps_path, summary_path


def apply_fluctuations(
    spectator: Spectator, rng: np.random.Generator, sd: float = 0.10
) -> Spectator:
    """Redraw bandwidth and decode capacity around the device-class baseline."""
    g_bw, g_cpu = np.clip(rng.normal(1.0, sd, size=2), 0.7, 1.3)
    device = spectator.device
    return replace(
        spectator,
        bandwidth_now=device.base_bandwidth * float(g_bw),
        decode_now={name: cap * float(g_cpu) for name, cap in device.decode_cap.items()},
    )


class Session:
    """Mutable state of one running session; ``advance`` runs one loop iteration."""

    def __init__(
        self,
        config: SessionConfig,
        pricing: PricingConfig,
        optimizer: OptimizerKind | str = OptimizerKind.SMART,
        seed: int | None = None,
        track_dominance: bool = False,
    ):
        self.config = config
        self.pricing = pricing
        self.optimizer = OptimizerKind(optimizer)
        self.seed = config.rng_seed if seed is None else seed
        self.track_dominance = track_dominance
        self.behavior = BehaviorParams.from_config(config)
        self.model = RevenueModel.from_config(config)
        self.step = 0
        self.trace = SessionTrace(config, pricing, self.optimizer, self.seed)
        self._arrivals_rng = substream(self.seed, ARRIVALS)
        self._factory = SpectatorFactory(config)
        self._fluct: dict[int, np.random.Generator] = {}
        self._quit: dict[int, np.random.Generator] = {}
        self.spectators: list[Spectator] = [
            self._factory.spawn(self._arrivals_rng, 0) for _ in range(config.initial_spectators)
        ]

    @property
    def done(self) -> bool:
        return self.step >= self.config.steps

    def _stream(self, cache, kind, spectator_id):
        if spectator_id not in cache:
            cache[spectator_id] = substream(self.seed, kind, spectator_id)
        return cache[spectator_id]

    def _allocate(self, problem: Problem) -> Plan:
        if self.optimizer is OptimizerKind.SMART:
            plan = smart_allocate(problem)
            other = naive_allocate(problem) if self.track_dominance else None
        else:
            plan = naive_allocate(problem)
            other = smart_allocate(problem) if self.track_dominance else None
        if other is not None:
            smart, naive = (plan, other) if self.optimizer is OptimizerKind.SMART else (other, plan)
            self.trace.etp_gaps.append(smart.etp - naive.etp)
        return plan

    def advance(self) -> StepMetrics:
        if self.done:
            raise ContractError(f"session already finished after {self.config.steps} steps")
        cfg = self.config
        t = self.step
        sd = cfg.fluctuation_sd
        present = [
            apply_fluctuations(s, self._stream(self._fluct, FLUCTUATIONS, s.id), sd)
            for s in self.spectators
        ]
        problem = Problem.from_config(cfg, self.pricing, present, cfg.steps - t)
        plan = self._allocate(problem)

        served = []
        for s in present:
            q = plan.qoe[s.id]
            served.append(replace(
                s, allocation=plan.combo(s.id), qoe_now=q,
                dqoe_now=max(0.0, problem.max_qoe[s.id] - q),
            ))

        revenue = math.fsum(float(revenue_rate(s.qoe_now, self.model)) for s in served)
        order = {p.name: i for i, p in enumerate(cfg.profiles)}
        by_name = {p.name: p for p in cfg.profiles}
        active = tuple(tuple(sorted(a, key=order.__getitem__)) for a in plan.active)
        node = node_cost_step(
            [[by_name[n] for n in a] for a in active], self.pricing, cfg.step_seconds
        )
        traffic = traffic_cost_step(plan.traffic_streams(), self.pricing, cfg.step_seconds)

        quits = sample_quits(
            served, self.behavior, lambda s: self._stream(self._quit, QUITS, s.id)
        )
        n_new = sample_arrivals(cfg.arrival_rate, self._arrivals_rng)
        newcomers = [self._factory.spawn(self._arrivals_rng, t) for _ in range(n_new)]

        n = len(served)
        metrics = StepMetrics(
            step=t,
            spectators=n,
            revenue=revenue,
            node_cost=node,
            traffic_cost=traffic,
            profit=revenue - node - traffic,
            mean_qoe=math.fsum(s.qoe_now for s in served) / n if n else 0.0,
            mean_dqoe=math.fsum(s.dqoe_now for s in served) / n if n else 0.0,
            active_profiles=active,
            arrivals=n_new,
            quits=len(quits),
        )
        for sid in quits:
            self._fluct.pop(sid, None)
            self._quit.pop(sid, None)
        self.spectators = [s for s in served if s.id not in quits] + newcomers
        self.step += 1
        self.trace.steps.append(metrics)
        return metrics


def advance_step(session: Session) -> tuple[Session, StepMetrics]:
    metrics = session.advance()
    return session, metrics


def run_session(
    config: SessionConfig,
    pricing: PricingConfig,
    optimizer: OptimizerKind | str = OptimizerKind.SMART,
    seed: int | None = None,
    track_dominance: bool = False,
) -> SessionTrace:
    session = Session(config, pricing, optimizer, seed, track_dominance)
    while not session.done:
        session.advance()
    return session.trace


def trace_summary_dict(trace: SessionTrace) -> dict:
    out = trace.totals()
    out["steps_detail"] = [asdict(m) for m in trace.steps]
    return out
