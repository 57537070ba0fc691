"""Tests for the command-line interface."""

import json
import sys
from dataclasses import replace
from pathlib import Path

import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent))

import multislit.commands as commands
from multislit import create_cli
from multislit.campaign import run_campaign
from multislit.storage import read_csv


FAST_PHOTON = "\n".join([
    "REGIME=photon",
    "SETS=2",
    "DURATION=0.05",
    "BASE_RATE=5e6",
    "MASTER_SEED=3",
    "",
])


@pytest.fixture
def cli():
    return create_cli()


@pytest.fixture
def experiment_file(tmp_path):
    path = tmp_path / "experiment.env"
    path.write_text(FAST_PHOTON)
    return path


def test_commands_are_registered(cli):
    """The command group exposes every command."""
    assert set(cli.commands) == {"theory", "simulate", "analyze", "check-alignment", "report"}


def test_theory_writes_curves_and_prints_formulas(cli, tmp_path):
    """theory writes the ideal curves and prints formulas, Fresnel numbers and κ."""
    result = CliRunner().invoke(cli, ["theory", "--output", str(tmp_path), "--points", "101"])
    assert result.exit_code == 0, result.output
    assert "I^(1)_2[AB] = + G_AB - G_A - G_B" in result.output
    assert "F_21" in result.output
    assert "F_1 = " in result.output
    assert "κ^(2) ideale" in result.output
    rows = read_csv(tmp_path / "theory_curves.csv")
    assert len(rows) == 8 * 101
    assert {row["regime"] for row in rows} == {"ideal"}


def test_theory_accepts_an_even_number_of_points(cli, tmp_path):
    """A grid without a δ = 0 sample still normalizes and reports κ."""
    result = CliRunner().invoke(cli, ["theory", "--output", str(tmp_path), "--points", "1000"])
    assert result.exit_code == 0, result.output
    rows = read_csv(tmp_path / "theory_curves.csv")
    assert len(rows) == 8 * 1000
    assert {row["n_sets"] for row in rows} == {"0"}
    assert "κ^(2) ideale" in result.output


def test_paper_scale_selects_the_long_preset(cli, tmp_path, monkeypatch):
    """--paper-scale and its --full-scale alias both hand the 120 s preset to the campaign."""
    seen = []

    def recording(config, raw_dir=None):
        seen.append(config)
        quick = replace(config, regime="photon", duration_s=0.05, base_rate_hz=5e6, sets=1, workers=1)
        return run_campaign(quick, raw_dir)

    monkeypatch.setattr(commands, "run_campaign", recording)
    for flag in ("--paper-scale", "--full-scale"):
        output = tmp_path / flag.strip("-")
        result = CliRunner().invoke(cli, ["simulate", flag, "--regime", "photon", "--output", str(output)])
        assert result.exit_code == 0, result.output
        assert (output / "summary.json").exists()
    assert [config.duration_s for config in seen] == [120.0, 120.0]
    assert [config.n_frames for config in seen] == [250, 250]


def test_simulated_raw_data_analyzes_to_the_same_kappa(cli, tmp_path, experiment_file):
    """simulate, analyze, report and check-alignment agree on the same raw data."""
    runner = CliRunner()
    simulated = tmp_path / "simulated"
    analyzed = tmp_path / "analyzed"
    raw = tmp_path / "raw"
    result = runner.invoke(cli, [
        "simulate", "--config", str(experiment_file), "--output", str(simulated), "--raw-dir", str(raw),
    ])
    assert result.exit_code == 0, result.output
    assert "[photon] set: 2" in result.output
    assert len(list(raw.glob("*.ttag"))) == 2 * 33

    result = runner.invoke(cli, [
        "analyze", str(raw), "--regime", "photon", "--config", str(experiment_file), "--output", str(analyzed),
    ])
    assert result.exit_code == 0, result.output
    first = json.loads((simulated / "summary.json").read_text())
    second = json.loads((analyzed / "summary.json").read_text())
    for order in ("1", "2"):
        assert first["regimes"]["photon"]["kappa"][order]["values"] == second["regimes"]["photon"]["kappa"][order]["values"]

    result = runner.invoke(cli, ["report", str(simulated)])
    assert result.exit_code == 0, result.output
    assert "κ^(1)" in result.output

    result = runner.invoke(cli, [
        "check-alignment", str(raw / "set000_ABCDE(1).ttag"), str(raw / "set000_ABCDE(2).ttag"), str(raw / "set000_0.ttag"),
        "--threshold", "1.0",
    ])
    assert result.exit_code == 0, result.output
    assert "Allineamento superato" in result.output


def test_alignment_failure_exits_with_status_one(cli, tmp_path, experiment_file):
    """A failed alignment check exits with status 1."""
    runner = CliRunner()
    raw = tmp_path / "raw"
    runner.invoke(cli, ["simulate", "--config", str(experiment_file), "--output", str(tmp_path / "out"), "--raw-dir", str(raw)])
    result = runner.invoke(cli, [
        "check-alignment", str(raw / "set000_ABCDE(1).ttag"), str(raw / "set000_ABCDE(2).ttag"), str(raw / "set000_0.ttag"),
        "--threshold", "0",
    ])
    assert result.exit_code == 1
    assert "non superato" in result.output


def test_mixed_alignment_files_rejected(cli, tmp_path):
    """Time-tag and frame files cannot be mixed in one alignment check."""
    names = ("a.ttag", "b.fram", "c.ttag")
    for name in names:
        (tmp_path / name).write_bytes(b"")
    result = CliRunner().invoke(cli, ["check-alignment", *(str(tmp_path / name) for name in names)])
    assert result.exit_code == 1
    assert "Operazione non riuscita" in result.output


def test_missing_experiment_file(cli, tmp_path):
    """A missing experiment file is reported by name."""
    result = CliRunner().invoke(cli, ["theory", "--config", str(tmp_path / "absent.env"), "--output", str(tmp_path)])
    assert result.exit_code == 1
    assert "absent.env" in result.output


def test_incomplete_raw_set_is_reported(cli, tmp_path):
    """A broken raw directory exits with status 1."""
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "set000_A.ttag").write_bytes(b"garbage")
    result = CliRunner().invoke(cli, ["analyze", str(raw), "--regime", "photon", "--output", str(tmp_path / "out")])
    assert result.exit_code == 1


def test_report_without_results(cli, tmp_path):
    """report without a summary exits with status 1."""
    result = CliRunner().invoke(cli, ["report", str(tmp_path)])
    assert result.exit_code == 1


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
