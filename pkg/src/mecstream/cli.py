"""Command line entry point: simulate, sweep, oracle-check, defaults."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .core import (
    ConfigError,
    ContractError,
    DeviceClass,
    PricingConfig,
    RevenueKind,
    SessionConfig,
    Spectator,
    build_default_profiles,
    dump_config,
    load_config,
)
from .behavior import BehaviorParams
from .economics import RevenueModel
from .harness import load_sweep_spec, run_sweep, write_outputs
from .optimizer import Problem, evaluate_etp, exhaustive_oracle, smart_allocate
from .simulator import run_session

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mecstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one session")
    sim.add_argument("--config", help="YAML config with session and/or pricing sections")
    sim.add_argument("--pricing", help="YAML file whose pricing section overrides --config")
    sim.add_argument("--optimizer", choices=["smart", "naive"], default="smart")
    sim.add_argument("--seed", type=int, help="overrides session.rng_seed")
    sim.add_argument("--out", default="session_out", help="output directory")

    sweep = sub.add_parser("sweep", help="run a one-variable experiment sweep")
    sweep.add_argument("--spec", required=True, help="YAML sweep spec")
    sweep.add_argument("--out", default="sweep_out", help="output directory")
    sweep.add_argument("--workers", type=int, default=1)

    oc = sub.add_parser("oracle-check", help="compare Smart against brute force")
    oc.add_argument("--instances", type=int, default=100)
    oc.add_argument("--max-spectators", type=int, default=4)
    oc.add_argument("--max-profiles", type=int, default=4)
    oc.add_argument("--seed", type=int, default=0)

    sub.add_parser("defaults", help="print the built-in configuration")
    return parser


def random_instance(rng: np.random.Generator, max_spectators: int = 4, max_profiles: int = 4) -> Problem:
    """Small random allocation problem; the free production profile is always included."""
    all_profiles = build_default_profiles()
    n = int(rng.integers(1, max_profiles + 1))
    extra = sorted(rng.choice(np.arange(1, len(all_profiles)), size=n - 1, replace=False))
    profiles = [all_profiles[0]] + [all_profiles[i] for i in extra]
    spectators = []
    for i in range(int(rng.integers(0, max_spectators + 1))):
        bw = float(rng.uniform(1500, 12000))
        caps = {p.name: float(rng.uniform(8, 50)) for p in profiles}
        device = DeviceClass(name=f"c{i}", base_bandwidth=bw, decode_cap=caps)
        spectators.append(Spectator(id=i, device=device, bandwidth_now=bw, decode_now=caps, join_step=0))
    kind = list(RevenueKind)[int(rng.integers(0, 3))]
    return Problem(
        spectators=spectators,
        profiles=profiles,
        pricing=PricingConfig(
            gpu_factor=float(rng.uniform(5, 200)), traffic_rate=float(rng.uniform(0.05, 2.0))
        ),
        model=RevenueModel(kind, float(rng.uniform(0.0005, 0.02))),
        behavior=BehaviorParams(0.5, float(rng.uniform(0, 0.05)), float(rng.uniform(0, 0.5))),
        remaining_steps=int(rng.integers(0, 61)),
        players=2,
        gpu_limit=int(rng.integers(0, 7)),
    )


def oracle_check(instances: int, max_spectators: int, max_profiles: int, seed: int) -> list[str]:
    """Mismatch descriptions; empty when Smart matches brute force everywhere."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(instances):
        problem = random_instance(rng, max_spectators, max_profiles)
        smart = evaluate_etp(smart_allocate(problem), problem)
        oracle = evaluate_etp(exhaustive_oracle(problem), problem)
        if abs(smart - oracle) > 1e-9:
            failures.append(f"instance {i}: smart {smart!r} != oracle {oracle!r}")
    return failures


def _load(config_path, pricing_path):
    session, pricing = load_config(config_path) if config_path else (SessionConfig(), PricingConfig())
    if pricing_path:
        _, pricing = load_config(pricing_path)
    return session, pricing


def _run(args) -> int:
    if args.command == "defaults":
        sys.stdout.write(dump_config(SessionConfig(), PricingConfig()))
    elif args.command == "simulate":
        session, pricing = _load(args.config, args.pricing)
        trace = run_session(session, pricing, args.optimizer, args.seed)
        steps_path, summary_path = trace.write(args.out)
        t = trace.totals()
        print(f"profit {t['profit']:.4f}  revenue {t['revenue']:.4f}  node {t['node_cost']:.4f}  "
              f"traffic {t['traffic_cost']:.4f}  mean QoE {t['mean_qoe']:.3f}")
        print(f"wrote {steps_path} and {summary_path}")
    elif args.command == "sweep":
        spec = load_sweep_spec(args.spec)
        result = run_sweep(spec, workers=args.workers)
        for p in write_outputs(result, args.out):
            print(f"wrote {p}")
    elif args.command == "oracle-check":
        start = time.perf_counter()
        failures = oracle_check(args.instances, args.max_spectators, args.max_profiles, args.seed)
        for f in failures:
            print(f, file=sys.stderr)
        print(f"{args.instances - len(failures)}/{args.instances} instances match "
              f"({time.perf_counter() - start:.2f}s)")
        if failures:
            return EXIT_CONTRACT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
