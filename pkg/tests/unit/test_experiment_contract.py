from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.combiner.schemes import Scheme
from src.config import AppConfig, RuntimeConfig, load_config
from src.dataio.synthetic import SyntheticDesign, write_bundle
from src.errors import ConfigError, DataError, ValidationFailure
from src.runner.archive import (
    append_run_event,
    build_run_id,
    finalize_run_archive,
    format_run_metadata,
    initialize_run_archive,
    register_output,
)
from src.runner.experiment import cmd_run, load_experiment_config, resolve_output_dir
from src.runner.outputs import MSFE_COLUMNS, write_weights

ALL_SCHEMES = [scheme.value for scheme in Scheme]


def _experiment(tmp_path: Path, size: int = 8, seed: int = 1, n_quarters: int = 40, **overrides) -> Path:
    design = SyntheticDesign(n_quarters=n_quarters, n_monthly=2, n_daily=1)
    manifest = write_bundle(tmp_path / "data", design, seed=seed)
    reservoir = {"sparsity": 0.5, "alpha": 0.3, "rho": 0.6}
    config = {
        "data": {"manifest": str(manifest.relative_to(tmp_path)), "daily_kappa": 10},
        "models": [
            {
                "name": "M-MFESN",
                "architecture": "multi",
                "reservoirs": [dict(reservoir, dim_state=dim) for dim in (5, 8, 5)],
                "ridge": {"fixed": 0.01},
            }
        ],
        "ensembles": [{"name": "EN-RP M-MFESN", "model": "M-MFESN", "size": size}],
        "schemes": [{"scheme": scheme} for scheme in ALL_SCHEMES],
        "spans": {"train": ["1990Q1", "1997Q4"], "evaluate": ["1998Q1", "1999Q4"]},
        "seed": 11,
    }
    config.update(overrides)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def _tree_bytes(root: Path) -> dict:
    return {path.relative_to(root).as_posix(): path.read_bytes() for path in sorted(root.rglob("*")) if path.is_file()}


def test_run_writes_every_table_and_valid_weights(tmp_path: Path) -> None:
    outcome = cmd_run(_experiment(tmp_path), AppConfig(), out_dir=tmp_path / "out")

    out = outcome.out_dir
    for name in ("msfe_table.csv", "ecdf.csv", "ecdf_by_alpha.csv", "forecasts.csv", "run_metadata.json"):
        assert (out / name).exists()
    for scheme in Scheme:
        weights = pd.read_csv(out / "en_rp_m_mfesn" / "weights_{}.csv".format(scheme.slug))
        assert np.allclose(weights.groupby("round")["weight"].sum(), 1.0, atol=1e-8)
        assert (weights["weight"] >= 0.0).all()
        regret = pd.read_csv(out / "en_rp_m_mfesn" / "regret_{}.csv".format(scheme.slug))
        assert regret["round"].tolist() == list(range(1, 9))

    table = pd.read_csv(out / "msfe_table.csv")
    assert list(table.columns) == ["model", *MSFE_COLUMNS]
    assert table["model"].tolist() == ["Mean", "AR(1)", "EN-RP M-MFESN", "EN-RP M-MFESN %"]
    assert table.loc[0, "Baseline"] == pytest.approx(1.0)

    metadata = json.loads((out / "run_metadata.json").read_text(encoding="utf-8"))
    assert metadata["status"] == "success"
    assert metadata["run_id"] == outcome.run_id
    assert metadata["run_id"].startswith("run-")
    events = [json.loads(line) for line in (out / "events.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [event["seq"] for event in events] == list(range(1, len(events) + 1))
    assert events[-1]["event"] == "run_completed"


def test_median_column_matches_the_ecdf_file(tmp_path: Path) -> None:
    outcome = cmd_run(_experiment(tmp_path), AppConfig(), out_dir=tmp_path / "out")
    table = pd.read_csv(outcome.out_dir / "msfe_table.csv")
    ecdf = pd.read_csv(outcome.out_dir / "ecdf.csv")

    relative = np.sort(ecdf.loc[ecdf["ensemble"] == "EN-RP M-MFESN", "relative_msfe"].to_numpy())
    middle = relative.size // 2
    oracle = (relative[middle - 1] + relative[middle]) / 2.0
    assert table.loc[2, "Median"] == pytest.approx(oracle, rel=1e-8)
    assert ecdf["ecdf"].max() == 1.0

    by_alpha = pd.read_csv(outcome.out_dir / "ecdf_by_alpha.csv")
    assert sorted(by_alpha["member"]) == sorted(ecdf["member"])


def test_rerun_with_the_same_seed_is_byte_identical(tmp_path: Path) -> None:
    config = _experiment(tmp_path)
    first = cmd_run(config, AppConfig(), out_dir=tmp_path / "first")
    second = cmd_run(config, AppConfig(), out_dir=tmp_path / "second", threads=3)
    assert first.run_id == second.run_id
    assert _tree_bytes(first.out_dir) == _tree_bytes(second.out_dir)

    reseeded = cmd_run(config, AppConfig(), out_dir=tmp_path / "third", seed=12)
    assert reseeded.run_id != first.run_id
    assert (reseeded.out_dir / "msfe_table.csv").read_bytes() != (first.out_dir / "msfe_table.csv").read_bytes()


def test_alpha_ensemble_groups_members_by_leak_rate(tmp_path: Path) -> None:
    ensembles = [{"name": "EN-aRP", "model": "M-MFESN", "size": 10, "family": "EN_ALPHA_RP"}]
    outcome = cmd_run(_experiment(tmp_path, ensembles=ensembles), AppConfig(), out_dir=tmp_path / "out")
    by_alpha = pd.read_csv(outcome.out_dir / "ecdf_by_alpha.csv")
    assert by_alpha.groupby("alpha").size().tolist() == [2] * 5
    assert (by_alpha.groupby("alpha")["ecdf"].max() == 1.0).all()


def test_missing_manifest_fails_with_a_data_error_and_archives_it(tmp_path: Path) -> None:
    config = _experiment(tmp_path, data={"manifest": "nowhere/manifest.json"})
    with pytest.raises(DataError):
        cmd_run(config, AppConfig(), out_dir=tmp_path / "out")
    metadata = json.loads((tmp_path / "out" / "run_metadata.json").read_text(encoding="utf-8"))
    assert metadata["status"] == "failed"
    assert metadata["return_code"] == 3


def test_experiment_config_rejects_inconsistent_documents(tmp_path: Path) -> None:
    bad_reference = _experiment(tmp_path, ensembles=[{"name": "E", "model": "missing", "size": 4}])
    with pytest.raises(ConfigError, match="unknown model"):
        load_experiment_config(bad_reference)
    with pytest.raises(ConfigError):
        load_experiment_config(_experiment(tmp_path, schemes=[]))
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "absent.json")

    overlapping = _experiment(tmp_path, spans={"train": ["1990Q1", "1998Q4"], "evaluate": ["1998Q1", "1999Q4"]})
    with pytest.raises(ConfigError, match="disjoint"):
        cmd_run(overlapping, AppConfig(), out_dir=tmp_path / "out")


def test_yaml_experiment_documents_are_accepted(tmp_path: Path) -> None:
    import yaml

    document = json.loads(_experiment(tmp_path).read_text(encoding="utf-8"))
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    assert load_experiment_config(path).ensembles[0].size == 8


def test_output_directory_precedence(tmp_path: Path) -> None:
    config_path = tmp_path / "cfg" / "study.json"
    assert resolve_output_dir(config_path, "res", "cli", "env") == Path("cli")
    assert resolve_output_dir(config_path, "res", None, "env") == Path("env")
    assert resolve_output_dir(config_path, "res", None, None) == tmp_path / "cfg" / "res"
    assert resolve_output_dir(config_path, None, None, None) == Path("outputs") / "study"


def test_environment_seed_and_output_dir_apply_below_the_flags(tmp_path: Path) -> None:
    config = _experiment(tmp_path, size=2)
    runtime = RuntimeConfig(output_dir=str(tmp_path / "env_out"), seed=11)
    from_env = cmd_run(config, AppConfig(runtime=runtime))
    assert from_env.out_dir == tmp_path / "env_out"
    assert from_env.run_id == cmd_run(config, AppConfig(), out_dir=tmp_path / "flag", seed=11).run_id


def test_load_config_reads_the_environment(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ESN_OUTPUT_DIR", "results")
    monkeypatch.setenv("ESN_THREADS", "4")
    monkeypatch.setenv("ESN_SEED", "99")
    config = load_config()
    assert (config.runtime.output_dir, config.runtime.threads, config.runtime.seed) == ("results", 4, 99)

    monkeypatch.setenv("ESN_THREADS", "many")
    with pytest.raises(ConfigError):
        load_config()
    monkeypatch.setenv("ESN_THREADS", "0")
    with pytest.raises(ConfigError):
        load_config()


def test_weights_off_the_simplex_are_refused_at_write_time(tmp_path: Path) -> None:
    with pytest.raises(ValidationFailure):
        write_weights(tmp_path / "w.csv", np.array([[0.5, 0.5], [0.7, 0.7]]))
    assert not (tmp_path / "w.csv").exists()


def test_archive_records_sequence_outputs_and_digests(tmp_path: Path) -> None:
    run_id = build_run_id("bounds", {"b": 1, "a": [1, 2]})
    assert run_id == build_run_id("bounds", {"a": [1, 2], "b": 1})
    assert run_id.startswith("bounds-") and len(run_id) == len("bounds-") + 12

    archive = initialize_run_archive(tmp_path / "run", run_id)
    append_run_event(archive, level="INFO", event="started", step="s", message="m")
    append_run_event(archive, level="INFO", event="done", step="s", message="m", data={"n": 1})
    table = tmp_path / "run" / "sub" / "table.csv"
    table.parent.mkdir()
    table.write_text("a\n1\n", encoding="utf-8")
    register_output(archive, table, "table")
    register_output(archive, table, "table")
    finalize_run_archive(
        archive, format_run_metadata(archive, command="bounds", return_code=4, settings={}, error="bad")
    )

    artifacts = json.loads((tmp_path / "run" / "run_artifacts.json").read_text(encoding="utf-8"))
    assert [item["name"] for item in artifacts["artifacts"]] == ["sub/table.csv", "events.jsonl"]
    assert len(artifacts["artifacts"][0]["sha256"]) == 64
    metadata = json.loads((tmp_path / "run" / "run_metadata.json").read_text(encoding="utf-8"))
    assert (metadata["status"], metadata["event_count"], metadata["output_count"]) == ("failed", 2, 1)

    again = initialize_run_archive(tmp_path / "run", run_id)
    assert again.paths["events"].read_text(encoding="utf-8") == ""


def test_ftl_and_adahedge_beat_the_median_expert_on_most_seeds(tmp_path: Path) -> None:
    passing = 0
    for seed in range(20):
        workspace = tmp_path / "seed{}".format(seed)
        workspace.mkdir()
        ensembles = [{"name": "EN-aRP", "model": "M-MFESN", "size": 10, "family": "EN_ALPHA_RP"}]
        schemes = [{"scheme": "FTL"}, {"scheme": "AdaHedge"}]
        spans = {"train": ["1990Q1", "2004Q4"], "evaluate": ["2005Q1", "2009Q4"]}
        config = _experiment(workspace, seed=seed, n_quarters=80, ensembles=ensembles, schemes=schemes, spans=spans)
        result = cmd_run(config, AppConfig(), out_dir=workspace / "out").results["EN-aRP"]
        median = float(np.median(result.expert_msfe))
        if all(result.outcomes[scheme].msfe <= median for scheme in (Scheme.FTL, Scheme.ADAHEDGE)):
            passing += 1
    assert passing >= 18
