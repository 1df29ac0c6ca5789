from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
from click.testing import CliRunner

from src.bounds.constants import BoundTerms
from src.config import AppConfig
from src.main import cli


def _bounds_config(tmp_path: Path, **overrides) -> Path:
    config = {
        "grid": {"n_experts": [3], "deltas": [0.5]},
        "replications": 200,
        "rounds": 1000,
        "pathwise": {"panels": 10, "rounds": 200, "n_experts": 4},
        "seed": 3,
    }
    config.update(overrides)
    path = tmp_path / "bounds.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def _invoke(monkeypatch, *args: str):
    monkeypatch.setattr("src.main.load_config", lambda: AppConfig())
    return CliRunner().invoke(cli, list(args))


def test_bounds_command_passes_on_a_wide_gap(monkeypatch, tmp_path: Path) -> None:
    out = tmp_path / "out"
    result = _invoke(monkeypatch, "bounds", str(_bounds_config(tmp_path)), "--out-dir", str(out))
    assert result.exit_code == 0, result.output

    report = pd.read_csv(out / "bounds_report.csv")
    assert report["scheme"].tolist() == ["FTL", "HedgeDecreasing"]
    assert (report["status"] == "PASS").all()
    assert (report["empirical_mean"] <= report["bound"]).all()
    assert (out / "worstcase_bounds.csv").exists()
    pathwise = pd.read_csv(out / "pathwise_report.csv")
    assert pathwise.loc[0, "panels"] == 10
    assert pathwise[["decreasing_violations", "adahedge_violations", "ftl_violations"]].sum().sum() == 0

    metadata = json.loads((out / "run_metadata.json").read_text(encoding="utf-8"))
    assert (metadata["command"], metadata["return_code"]) == ("bounds", 0)


def test_bounds_command_reports_fail_rows_with_a_validation_exit(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.setattr("src.bounds.validation.ftl_bound_terms", lambda *args: BoundTerms(1e-9, 1e-9))
    out = tmp_path / "out"
    config = _bounds_config(tmp_path, replications=10, rounds=200, pathwise={"enabled": False})
    result = _invoke(monkeypatch, "bounds", str(config), "--out-dir", str(out))
    assert result.exit_code == 4

    report = pd.read_csv(out / "bounds_report.csv")
    assert report.loc[report["scheme"] == "FTL", "status"].tolist() == ["FAIL"]
    metadata = json.loads((out / "run_metadata.json").read_text(encoding="utf-8"))
    assert metadata["status"] == "failed"
    assert metadata["return_code"] == 4
    assert not (out / "pathwise_report.csv").exists()


def test_bounds_command_rejects_a_zero_gap(monkeypatch, tmp_path: Path) -> None:
    config = _bounds_config(tmp_path, grid={"n_experts": [3], "deltas": [0.0]})
    result = _invoke(monkeypatch, "bounds", str(config), "--out-dir", str(tmp_path / "out"))
    assert result.exit_code == 2
    assert not (tmp_path / "out").exists()


def test_run_command_exit_codes(monkeypatch, tmp_path: Path) -> None:
    missing = _invoke(monkeypatch, "run", str(tmp_path / "absent.json"))
    assert missing.exit_code == 2

    config = {
        "data": {"manifest": "no_such_dir/manifest.json"},
        "models": [{"name": "m", "reservoirs": [{"dim_state": 4}]}],
        "ensembles": [{"name": "e", "model": "m", "size": 2}],
        "schemes": [{"scheme": "SA"}],
        "spans": {"train": [0, 20], "evaluate": [21, 30]},
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    no_data = _invoke(monkeypatch, "run", str(path), "--out-dir", str(tmp_path / "out"))
    assert no_data.exit_code == 3


def test_synth_then_run(monkeypatch, tmp_path: Path) -> None:
    result = _invoke(monkeypatch, "synth", str(tmp_path / "data"), "--quarters", "32", "--seed", "4")
    assert result.exit_code == 0, result.output
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["target"] == "Y"
    assert [entry["code"] for entry in manifest["series"]] == ["Y", "M1", "M2", "M3", "D1"]

    config = {
        "data": {"manifest": "data/manifest.json", "daily_kappa": 12},
        "models": [{"name": "m", "reservoirs": [{"dim_state": 4, "sparsity": 0.5}] * 3, "ridge": {"fixed": 0.1}}],
        "ensembles": [{"name": "e", "model": "m", "size": 3}],
        "schemes": [{"scheme": "FTL"}, {"scheme": "HedgeConstant", "params": {"eta": 0.5}}],
        "spans": {"train": ["1990Q1", "1995Q4"], "evaluate": ["1996Q1", "1997Q4"]},
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    run = _invoke(monkeypatch, "run", str(path), "--out-dir", str(tmp_path / "out"), "--threads", "2")
    assert run.exit_code == 0, run.output
    assert (tmp_path / "out" / "e" / "weights_hedgeconstant.csv").exists()
    assert (tmp_path / "out" / "e" / "regret_ftl.csv").exists()


def test_bad_environment_is_a_config_exit(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ESN_THREADS", "-1")
    result = CliRunner().invoke(cli, ["synth", str(tmp_path / "data")])
    assert result.exit_code == 2
