import subprocess
import sys

import yaml

from mecstream.cli import main
from mecstream.core import parse_config


def test_defaults_round_trip(capsys):
    assert main(["defaults"]) == 0
    session, pricing = parse_config(yaml.safe_load(capsys.readouterr().out))
    assert session.steps == 60 and pricing.gpu_factor == 10


def test_simulate_deterministic(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("session:\n  steps: 8\n")
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for f in ("steps.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_pricing_file_overrides(tmp_path):
    p = tmp_path / "p.yaml"
    p.write_text("pricing:\n  gpu_factor: 20\n")
    cfg = tmp_path / "c.yaml"
    cfg.write_text("session:\n  steps: 2\n")
    assert main(["simulate", "--config", str(cfg), "--pricing", str(p), "--out", str(tmp_path / "o")]) == 0


def test_config_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("session:\n  nonsense: 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_unknown_flag_exit_1():
    proc = subprocess.run([sys.executable, "-m", "mecstream", "simulate", "--frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "usage" in proc.stderr


def test_oracle_check_passes(capsys):
    assert main(["oracle-check", "--instances", "30", "--seed", "3"]) == 0
    assert "30/30" in capsys.readouterr().out


def test_sweep_command(tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text("variable: GpuCount\nvalues: [0, 6]\nreplications: 1\nsession:\n  steps: 3\n")
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "sweep_long.csv").exists()
    assert (tmp_path / "o" / "plot_GpuCount.csv").exists()
