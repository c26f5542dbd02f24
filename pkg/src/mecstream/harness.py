"""One-variable-at-a-time experiment sweeps with paired Smart/Naive replications."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .behavior import quit_b_for_session
from .core import (
    DEVICE_CLASS_NAMES,
    ConfigError,
    ContractError,
    OptimizerKind,
    PricingConfig,
    SessionConfig,
)
from .simulator import SessionTrace, run_session

METRICS = (
    "revenue", "node_cost", "traffic_cost", "profit", "spectators", "dqoe", "total_qoe", "mean_qoe",
)
OPTIMIZERS = (OptimizerKind.SMART, OptimizerKind.NAIVE)


class SweepVariable(str, enum.Enum):
    ARRIVAL_RATE = "ArrivalRate"
    REVENUE_RATE = "RevenueRate"
    GPU_COUNT = "GpuCount"
    REVENUE_MODEL = "RevenueModel"
    GPU_COST_FACTOR = "GpuCostFactor"
    POPULATION_MIX = "PopulationMix"
    QUITTING_PARAMS = "QuittingParams"


# Session-end quit probability and QoE factor for each quitting preset.
QUITTING_PRESETS = {
    "interesting": (0.10, 0.10),
    "default": (0.20, 0.20),
    "boring": (0.50, 0.20),
    "demanding": (0.20, 0.50),
}

DEFAULT_VALUES = {
    SweepVariable.ARRIVAL_RATE: [0.25, 0.5, 0.75, 1.0],
    SweepVariable.REVENUE_RATE: [0.005, 0.01, 0.015, 0.02],
    SweepVariable.GPU_COUNT: [0, 2, 4, 6],
    SweepVariable.REVENUE_MODEL: ["Constant", "Linear", "Logistic"],
    SweepVariable.GPU_COST_FACTOR: [5, 10, 15, 20],
    SweepVariable.POPULATION_MIX: list(DEVICE_CLASS_NAMES),
    SweepVariable.QUITTING_PARAMS: list(QUITTING_PRESETS),
}

# Line metric drawn against the money bars in each figure.
LINE_METRIC = {
    SweepVariable.ARRIVAL_RATE: "spectators",
    SweepVariable.POPULATION_MIX: "total_qoe",
}


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    variable: SweepVariable
    values: list[Any] = Field(min_length=1)
    replications: int = Field(default=30, ge=1)
    base_seed: int = 0
    session: SessionConfig = Field(default_factory=SessionConfig)
    pricing: PricingConfig = Field(default_factory=PricingConfig)


def load_sweep_spec(path: str | Path) -> SweepSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
        return SweepSpec.model_validate(doc)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except (yaml.YAMLError, ValidationError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def apply_value(
    variable: SweepVariable, value, session: SessionConfig, pricing: PricingConfig
) -> tuple[SessionConfig, PricingConfig]:
    """Configs for one sweep point; everything else stays at the base values."""
    s = session.model_dump()
    p = pricing.model_dump()
    if variable is SweepVariable.ARRIVAL_RATE:
        s["arrival_rate"] = float(value)
    elif variable is SweepVariable.REVENUE_RATE:
        s["revenue_rate"] = float(value)
    elif variable is SweepVariable.GPU_COUNT:
        s["gpu_limit"] = int(value)
    elif variable is SweepVariable.REVENUE_MODEL:
        s["revenue_model"] = value
    elif variable is SweepVariable.GPU_COST_FACTOR:
        p["gpu_factor"] = float(value)
    elif variable is SweepVariable.POPULATION_MIX:
        if isinstance(value, str):
            value = {c.name: (2.0 if c.name == value else 1.0) for c in session.device_classes}
        s["population_weights"] = dict(value)
    elif variable is SweepVariable.QUITTING_PARAMS:
        if isinstance(value, str):
            if value not in QUITTING_PRESETS:
                raise ConfigError(f"unknown quitting preset {value!r}")
            p_quit, d = QUITTING_PRESETS[value]
        else:
            p_quit, d = value
        s["quit_base"] = quit_b_for_session(p_quit, session.steps or 60)
        s["quit_qoe_factor"] = float(d)
    try:
        return SessionConfig.model_validate(s), PricingConfig.model_validate(p)
    except ValidationError as exc:
        raise ConfigError(f"{variable.value}={value!r}: {exc}") from exc


def replication_seed(base_seed: int, value_index: int, replication: int) -> int:
    """Seed shared by Smart and Naive for one (value, replication) cell pair."""
    ss = np.random.SeedSequence([base_seed, value_index, replication])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def trace_metrics(trace: SessionTrace) -> dict[str, float]:
    return {
        "revenue": trace.revenue,
        "node_cost": trace.node_cost,
        "traffic_cost": trace.traffic_cost,
        "profit": trace.profit,
        "spectators": trace.mean_spectators,
        "dqoe": trace.mean_dqoe,
        "total_qoe": trace.total_qoe,
        "mean_qoe": trace.mean_qoe,
    }


@dataclass(frozen=True)
class CellStats:
    mean: dict[str, float]
    stderr: dict[str, float]
    n: int


def aggregate_replications(traces: Sequence[SessionTrace]) -> CellStats:
    """Means and standard errors of each session total."""
    if not traces:
        raise ContractError("cannot aggregate an empty list of traces")
    rows = [trace_metrics(t) for t in traces]
    return aggregate_rows(rows)


def aggregate_rows(rows: Sequence[dict[str, float]]) -> CellStats:
    if not rows:
        raise ContractError("cannot aggregate an empty list of traces")
    n = len(rows)
    mean, se = {}, {}
    for m in METRICS:
        x = np.array([r[m] for r in rows], dtype=float)
        mean[m] = float(x.mean())
        se[m] = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CellStats(mean=mean, stderr=se, n=n)


@dataclass
class SweepResult:
    variable: SweepVariable
    values: list
    cells: dict[tuple[int, str], CellStats] = field(default_factory=dict)
    # Smallest Smart-minus-Naive ETP seen on any step decision, per cell.
    min_etp_gap: dict[tuple[int, str], float] = field(default_factory=dict)

    def cell(self, value_index: int, optimizer: OptimizerKind | str) -> CellStats:
        return self.cells[(value_index, OptimizerKind(optimizer).value)]

    def long_rows(self) -> list[list[str]]:
        rows = []
        for vi, value in enumerate(self.values):
            for opt in OPTIMIZERS:
                c = self.cell(vi, opt)
                for m in METRICS:
                    rows.append([
                        self.variable.value, _fmt_value(value), opt.value, m,
                        _fmt(c.mean[m]), _fmt(c.stderr[m]),
                    ])
        return rows

    def plot_rows(self) -> tuple[list[str], list[list[str]]]:
        line = LINE_METRIC.get(self.variable, "dqoe")
        metrics = ["revenue", "node_cost", "traffic_cost", "profit", line]
        header = ["value"] + [f"{o.value}_{m}" for o in OPTIMIZERS for m in metrics]
        rows = []
        for vi, value in enumerate(self.values):
            row = [_fmt_value(value)]
            for o in OPTIMIZERS:
                row += [_fmt(self.cell(vi, o).mean[m]) for m in metrics]
            rows.append(row)
        return header, rows


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return _fmt(v)
    if isinstance(v, (list, tuple)):
        return "/".join(_fmt_value(x) for x in v)
    if isinstance(v, dict):
        return "/".join(f"{k}={_fmt_value(x)}" for k, x in v.items())
    return str(v)


def _run_cell(args) -> tuple[dict[str, float], float]:
    session, pricing, optimizer, seed, track = args
    trace = run_session(session, pricing, optimizer, seed, track_dominance=track)
    gap = min(trace.etp_gaps) if trace.etp_gaps else math.inf
    return trace_metrics(trace), gap


def run_sweep(spec: SweepSpec, workers: int = 1, track_dominance: bool = False) -> SweepResult:
    """Run every (value, optimizer, replication) session and aggregate per cell.

    Results are independent of ``workers``: jobs are collected in submission order.
    """
    jobs, keys = [], []
    for vi, value in enumerate(spec.values):
        session, pricing = apply_value(spec.variable, value, spec.session, spec.pricing)
        for opt in OPTIMIZERS:
            for r in range(spec.replications):
                seed = replication_seed(spec.base_seed, vi, r)
                jobs.append((session, pricing, opt, seed, track_dominance))
                keys.append((vi, opt.value))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_cell, jobs, chunksize=4))
    else:
        outputs = [_run_cell(j) for j in jobs]

    grouped: dict[tuple[int, str], list] = {}
    for key, out in zip(keys, outputs):
        grouped.setdefault(key, []).append(out)
    result = SweepResult(variable=spec.variable, values=list(spec.values))
    for key, outs in grouped.items():
        result.cells[key] = aggregate_rows([m for m, _ in outs])
        result.min_etp_gap[key] = min(g for _, g in outs)
    return result


def write_outputs(result: SweepResult, path: str | Path) -> tuple[Path, Path]:
    """Write ``sweep_long.csv`` and ``plot_<variable>.csv`` into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        long_path = out / "sweep_long.csv"
        plot_path = out / f"plot_{result.variable.value}.csv"
        long_path.write_text(_csv(["variable", "value", "optimizer", "metric", "mean", "stderr"],
                                  result.long_rows()))
        header, rows = result.plot_rows()
        plot_path.write_text(_csv(header, rows))
    except OSError as exc:
        raise OSError(f"cannot write sweep outputs to {out}: {exc}") from exc
    return long_path, plot_path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_long_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
