"""Tests for the command-line entry point and run tracking."""

import csv
import logging

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from qavmc.config import validate_run_config
from qavmc.exceptions import (
    EXIT_NUMERICAL,
    EXIT_VALIDATION,
    ConfigValidationError,
    NumericalError,
    handle_cli_exception,
)
from qavmc.main import cli
from qavmc.middleware import RunTracker

RAW = {
    "seed": 11,
    "system": {"kind": "hubbard", "lattice": {"kind": "chain", "dims": [2]}, "U": 4.0},
    "proposals": [
        {"kind": "Uniform"},
        {"kind": "Quantum", "tau_grid": {"start": 0.5, "stop": 1.5, "step": 0.5}},
    ],
    "experiment": {"u_values": [2.0, 4.0]},
}


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    root = logging.getLogger()
    package = logging.getLogger("qavmc")
    saved = (list(root.handlers), root.level, package.level)
    yield CliRunner()
    for handler in root.handlers:
        if handler not in saved[0]:
            handler.close()
    root.handlers[:] = saved[0]
    root.setLevel(saved[1])
    package.setLevel(saved[2])


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.yml"
    path.write_text(yaml.safe_dump(RAW), encoding="utf-8")
    return path


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "WARNING", *[str(a) for a in args]])


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_validate_prints_the_hash(runner, config_path):
    result = invoke(runner, "--config", config_path, "validate")
    assert result.exit_code == 0
    assert "config_hash=" in result.output
    assert "seed=11" in result.output


def test_gap_scan_writes_tables(runner, config_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, "--config", config_path, "--output-dir", out, "gap-scan")
    assert result.exit_code == 0, result.output

    rows = read_rows(out / "gap-scan" / "gaps.csv")
    assert list(rows[0]) == [
        "parameter", "value", "proposal", "dimension", "gap", "tau_best", "config_hash", "seed",
    ]
    assert len(rows) == 4
    assert {row["seed"] for row in rows} == {"11"}
    assert rows[0]["tau_best"] == ""
    assert float(rows[1]["tau_best"]) in (0.5, 1.0, 1.5)
    assert (out / "gap-scan" / "tau_scan.csv").is_file()


def test_runs_are_byte_identical(runner, config_path, tmp_path):
    for name in ("a", "b"):
        result = invoke(
            runner,
            "--config", config_path,
            "--output-dir", tmp_path / name,
            "--set", "experiment.n_chains=3",
            "--set", "experiment.n_samples=200",
            "mcmc-observable",
        )
        assert result.exit_code == 0, result.output
    for table in ("observables.csv", "chain_means.csv", "chains_Uniform.csv"):
        first = (tmp_path / "a" / "mcmc-observable" / table).read_bytes()
        second = (tmp_path / "b" / "mcmc-observable" / table).read_bytes()
        assert first == second


def test_chain_tables_hold_every_recorded_step(runner, config_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(
        runner,
        "--config", config_path,
        "--output-dir", out,
        "--set", "experiment.n_chains=2",
        "--set", "experiment.sample_sizes=[50,120]",
        "mcmc-observable",
    )
    assert result.exit_code == 0, result.output

    for proposal in ("Uniform", "Quantum"):
        rows = read_rows(out / "mcmc-observable" / f"chains_{proposal}.csv")
        assert list(rows[0]) == [
            "chain", "step", "state", "accepted", "n1a_nNb", "config_hash", "seed",
        ]
        # longest sample size only
        assert len(rows) == 2 * 120
        assert [row["step"] for row in rows[:3]] == ["0", "1", "2"]
        assert {row["chain"] for row in rows} == {"0", "1"}
        assert all(len(row["state"]) == 4 and row["state"].count("1") == 2 for row in rows)
        assert {row["accepted"] for row in rows} <= {"0", "1"}


def test_chain_tables_can_be_switched_off(runner, config_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(
        runner,
        "--config", config_path,
        "--output-dir", out,
        "--set", "experiment.n_chains=2",
        "--set", "experiment.n_samples=40",
        "--set", "experiment.write_chains=false",
        "mcmc-observable",
    )
    assert result.exit_code == 0, result.output
    assert not list((out / "mcmc-observable").glob("chains_*.csv"))


def test_validate_runs_the_pauli_check(runner, config_path):
    result = invoke(runner, "--config", config_path, "validate", "--pauli-check")
    assert result.exit_code == 0, result.output
    assert "pauli_strings=" in result.output


def test_seed_and_overrides_reach_the_run(runner, config_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(
        runner,
        "--config", config_path,
        "--output-dir", out,
        "--seed", 99,
        "--set", "experiment.u_values=[4.0]",
        "gap-scan",
    )
    assert result.exit_code == 0, result.output
    rows = read_rows(out / "gap-scan" / "gaps.csv")
    assert {row["seed"] for row in rows} == {"99"}
    assert {row["value"] for row in rows} == {"4.0"}


def test_missing_fcidump_exits_with_validation_code(runner, tmp_path):
    raw = {"seed": 1, "system": {"kind": "molecule", "fcidump": "nowhere.fcidump"}, "proposals": [{"kind": "Uniform"}]}
    path = tmp_path / "molecule.yml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    result = invoke(runner, "--config", path, "gap-scan")
    assert result.exit_code == EXIT_VALIDATION
    assert "fcidump" in result.output


def test_missing_config_option(runner):
    assert invoke(runner, "gap-scan").exit_code == EXIT_VALIDATION
    assert invoke(runner, "validate").exit_code == EXIT_VALIDATION


def test_bad_worker_count_is_a_usage_error(runner, config_path):
    result = invoke(runner, "--config", config_path, "--workers", 0, "validate")
    assert result.exit_code == 2
    assert "--workers" in result.output


def test_exit_codes():
    assert handle_cli_exception(ConfigValidationError("seed", "missing")) == EXIT_VALIDATION
    assert handle_cli_exception(NumericalError("diverged")) == EXIT_NUMERICAL
    assert handle_cli_exception(np.linalg.LinAlgError("singular")) == EXIT_NUMERICAL
    assert handle_cli_exception(RuntimeError("unexpected")) == EXIT_NUMERICAL


class TestRunTracker:
    def test_csv_formatting(self, tmp_path):
        config = validate_run_config(RAW)
        with RunTracker("gap-scan", config, tmp_path) as tracker:
            path = tracker.write_csv("t.csv", [{"x": 0.1, "y": None}, {"x": 2}])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x,y,config_hash,seed"
        assert lines[1] == f"0.1,,{tracker.run_id},11"
        assert lines[2] == f"2,,{tracker.run_id},11"

    def test_failed_run_removes_partial_outputs(self, tmp_path):
        config = validate_run_config(RAW)
        with pytest.raises(NumericalError):
            with RunTracker("gap-scan", config, tmp_path) as tracker:
                path = tracker.write_csv("partial.csv", [{"x": 1.0}])
                raise NumericalError("diverged")
        assert not path.exists()
        assert tracker.written == []
