import pytest

from mecstream.core import ConfigError, ContractError, PricingConfig, SessionConfig
from mecstream.harness import (
    METRICS,
    SweepSpec,
    SweepVariable,
    aggregate_replications,
    aggregate_rows,
    apply_value,
    load_sweep_spec,
    read_long_csv,
    replication_seed,
    run_sweep,
    trace_metrics,
    write_outputs,
)
from mecstream.simulator import run_session

SHORT = SessionConfig(steps=6)


def _spec(variable, values, reps=2, **kw):
    return SweepSpec(variable=variable, values=values, replications=reps, session=SHORT, **kw)


def test_aggregate_arithmetic():
    rows = [dict.fromkeys(METRICS, 0.0) for _ in range(2)]
    rows[0]["profit"], rows[1]["profit"] = 1.0, 3.0
    cell = aggregate_rows(rows)
    assert cell.mean["profit"] == 2 and cell.stderr["profit"] == pytest.approx(1.0)
    with pytest.raises(ContractError):
        aggregate_replications([])


def test_identical_traces_zero_stderr():
    t = run_session(SHORT, PricingConfig(), "smart", seed=1)
    cell = aggregate_replications([t, t, t])
    assert all(v == 0 for v in cell.stderr.values())
    assert cell.mean["profit"] == pytest.approx(
        cell.mean["revenue"] - cell.mean["node_cost"] - cell.mean["traffic_cost"], abs=1e-12)


def test_sweep_shape_and_single_replication():
    spec = _spec(SweepVariable.ARRIVAL_RATE, [0.25, 0.5, 0.75, 1.0], reps=1)
    result = run_sweep(spec)
    assert len(result.cells) == 8
    seed = replication_seed(0, 2, 0)
    trace = run_session(apply_value(spec.variable, 0.75, SHORT, PricingConfig())[0],
                        PricingConfig(), "naive", seed)
    assert result.cell(2, "naive").mean == trace_metrics(trace)


def test_unknown_variable_rejected(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("variable: Weather\nvalues: [1]\n")
    with pytest.raises(ConfigError):
        load_sweep_spec(path)


@pytest.mark.parametrize("variable,value,check", [
    (SweepVariable.GPU_COST_FACTOR, 15, lambda s, p: p.gpu_factor == 15),
    (SweepVariable.GPU_COUNT, 2, lambda s, p: s.gpu_limit == 2),
    (SweepVariable.REVENUE_MODEL, "Logistic", lambda s, p: s.revenue_model.value == "Logistic"),
    (SweepVariable.POPULATION_MIX, "PcFiber", lambda s, p: s.population_weights["PcFiber"] == 2),
    (SweepVariable.QUITTING_PARAMS, "boring",
     lambda s, p: abs((1 - s.quit_base) ** 60 - 0.5) < 1e-12 and s.quit_qoe_factor == 0.2),
    (SweepVariable.REVENUE_RATE, 0.02, lambda s, p: s.revenue_rate == 0.02),
])
def test_apply_value(variable, value, check):
    s, p = apply_value(variable, value, SessionConfig(), PricingConfig())
    assert check(s, p)


def test_write_outputs_round_trip(tmp_path):
    spec = _spec(SweepVariable.GPU_COST_FACTOR, [5, 20])
    result = run_sweep(spec)
    long_path, plot_path = write_outputs(result, tmp_path / "a")
    rows = read_long_csv(long_path)
    assert len(rows) == 2 * 2 * len(METRICS)
    for row in rows:
        vi = [str(v) for v in spec.values].index(row["value"])
        cell = result.cell(vi, row["optimizer"])
        assert float(row["mean"]) == pytest.approx(cell.mean[row["metric"]], rel=1e-5, abs=1e-12)
        assert float(row["stderr"]) == pytest.approx(cell.stderr[row["metric"]], rel=1e-5, abs=1e-12)
    assert len(plot_path.read_text().splitlines()) == 3
    again = write_outputs(run_sweep(spec), tmp_path / "b")
    assert again[0].read_bytes() == long_path.read_bytes()
    assert again[1].read_bytes() == plot_path.read_bytes()


def test_workers_do_not_change_results():
    spec = _spec(SweepVariable.ARRIVAL_RATE, [0.5, 1.0])
    assert run_sweep(spec, workers=1).cells == run_sweep(spec, workers=2).cells


def test_dominance_tracked():
    result = run_sweep(_spec(SweepVariable.GPU_COST_FACTOR, [20]), track_dominance=True)
    assert all(g >= -1e-9 for g in result.min_etp_gap.values())
