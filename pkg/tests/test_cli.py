import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from solarfault.cli import cli
from solarfault.metrics import read_scores_csv


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    result = CliRunner().invoke(cli, [
        "synth", "--out", str(out), "--seed", "9",
        "--train-systems", "2", "--val-systems", "1", "--test-systems", "2",
        "--days-per-system", "4", "--prevalence", "0.5",
    ])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("train")
    result = CliRunner().invoke(cli, [
        "train", "--data", str(data_dir), "--out", str(out),
        "--seeds", "0,1", "--steps", "2",
    ])
    assert result.exit_code == 0, result.output
    return out


def test_synth_outputs(data_dir):
    names = {p.name for p in data_dir.iterdir()}
    assert {"schema.txt", "split.txt", "labels.csv", "manifest.json"} <= names
    assert {f"syn-00{i}.csv" for i in range(5)} <= names
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["config"]["seed"] == 9


def test_synth_config_file_and_flag_precedence(runner, tmp_path):
    conf = tmp_path / "conf.ini"
    conf.write_text("[common]\nseed = 4\n[synth]\ntrain_systems = 1\n"
                    "val_systems = 1\ntest_systems = 1\ndays_per_system = 1\n")
    out = tmp_path / "ds"
    result = runner.invoke(cli, ["synth", "--out", str(out),
                                 "--config", str(conf), "--seed", "11"])
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 11  # flag wins over file
    assert manifest["config"]["n_train_systems"] == 1  # file wins over default


def test_ingest_writes_report(runner, data_dir, tmp_path):
    out = tmp_path / "ingest"
    result = runner.invoke(cli, ["ingest", "--data", str(data_dir),
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = (out / "ingestion_report.csv").read_text().strip().splitlines()
    assert len(lines) == 6  # header + 5 systems
    assert "5 systems" in result.output


def test_env_var_names_data_dir(runner, data_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SOLARFAULT_DATA_DIR", str(data_dir))
    out = tmp_path / "ingest_env"
    result = runner.invoke(cli, ["ingest", "--out", str(out)])
    assert result.exit_code == 0, result.output


def test_train_artifacts(train_dir):
    names = {p.name for p in train_dir.iterdir()}
    assert {"ckpt_vae_seed0.sfck", "ckpt_vae_seed1.sfck",
            "train_log_vae_seed0.csv", "train_log_vae_seed1.csv",
            "train_summary_vae.json", "manifest.json"} <= names
    summary = json.loads((train_dir / "train_summary_vae.json").read_text())
    assert [s["seed"] for s in summary] == [0, 1]
    assert all(np.isfinite(s["final_train_total"]) for s in summary)


def test_train_rerun_is_byte_identical(runner, data_dir, tmp_path, train_dir):
    out = tmp_path / "again"
    result = runner.invoke(cli, ["train", "--data", str(data_dir),
                                 "--out", str(out), "--seeds", "0", "--steps", "2"])
    assert result.exit_code == 0, result.output
    assert ((out / "ckpt_vae_seed0.sfck").read_bytes()
            == (train_dir / "ckpt_vae_seed0.sfck").read_bytes())


def test_score_vae_and_report(runner, data_dir, train_dir, tmp_path):
    out = tmp_path / "scores"
    result = runner.invoke(cli, [
        "score", "--data", str(data_dir), "--out", str(out),
        "--detector", "vae", "--ckpt", str(train_dir / "ckpt_vae_seed0.sfck"),
    ])
    assert result.exit_code == 0, result.output
    csv_path = out / "scores_vae_seed0.csv"
    entries = read_scores_csv(csv_path)
    assert len(entries) == 8  # 2 test systems x 4 days
    assert all(np.isfinite(e.score) for e in entries)

    rep = tmp_path / "figures"
    result = runner.invoke(cli, ["report", "--scores", str(csv_path),
                                 "--out", str(rep), "--cap", "5"])
    assert result.exit_code == 0, result.output
    svgs = sorted(p.name for p in rep.glob("*.svg"))
    assert svgs == ["system_syn-003_scores.svg", "system_syn-004_scores.svg"]
    assert sorted(p.name for p in rep.glob("system_*.csv")) == [
        "system_syn-003_scores.csv", "system_syn-004_scores.csv"]

    only = tmp_path / "one_system"
    result = runner.invoke(cli, ["report", "--scores", str(csv_path),
                                 "--out", str(only), "--system", "syn-004"])
    assert result.exit_code == 0, result.output
    assert [p.name for p in only.glob("*.svg")] == ["system_syn-004_scores.svg"]


def test_score_requires_ckpt_for_vae(runner, data_dir, tmp_path):
    result = runner.invoke(cli, ["score", "--data", str(data_dir),
                                 "--out", str(tmp_path / "x"), "--detector", "vae"])
    assert result.exit_code == 2
    assert "--ckpt" in result.output


def test_score_rejects_detector_mismatch(runner, data_dir, train_dir, tmp_path):
    from solarfault.errors import CheckpointError

    result = runner.invoke(cli, [
        "score", "--data", str(data_dir), "--out", str(tmp_path / "x"),
        "--detector", "vae-homoscedastic",
        "--ckpt", str(train_dir / "ckpt_vae_seed0.sfck"),
    ])
    assert isinstance(result.exception, CheckpointError)


def test_score_pca_detectors(runner, data_dir, tmp_path):
    out = tmp_path / "pca"
    for det in ("pca-unscaled", "pca-rescaled"):
        result = runner.invoke(cli, [
            "score", "--data", str(data_dir), "--out", str(out),
            "--detector", det, "--n-components", "2",
        ])
        assert result.exit_code == 0, result.output
        assert (out / f"scores_{det}.csv").is_file()
        assert (out / f"ckpt_{det}.sfck").is_file()
    unscaled = [e.score for e in read_scores_csv(out / "scores_pca-unscaled.csv")]
    assert all(s >= 0 for s in unscaled)


def test_sweep_pca(runner, data_dir, tmp_path):
    out = tmp_path / "sweep"
    result = runner.invoke(cli, ["sweep-pca", "--data", str(data_dir),
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = (out / "pca_sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 9  # header + one row per component count


def test_eval_groups_seeds(runner, data_dir, train_dir, tmp_path):
    scores = tmp_path / "s"
    for seed in (0, 1):
        result = runner.invoke(cli, [
            "score", "--data", str(data_dir), "--out", str(scores),
            "--detector", "vae",
            "--ckpt", str(train_dir / f"ckpt_vae_seed{seed}.sfck"),
        ])
        assert result.exit_code == 0, result.output
    out = tmp_path / "eval"
    result = runner.invoke(cli, [
        "eval", str(scores / "scores_vae_seed0.csv"),
        str(scores / "scores_vae_seed1.csv"), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    comparison = json.loads((out / "comparison.json").read_text())
    assert list(comparison) == ["vae"]  # both seeds grouped under one detector
    assert comparison["vae"]["auc_roc"]["std"] is not None
    assert (out / "comparison.txt").read_text().count("vae") == 1
    assert (out / "report_scores_vae_seed0.json").is_file()
    assert (out / "report_scores_vae_seed0.txt").is_file()


def run_main(*args):
    return subprocess.run(
        [sys.executable, "-c",
         "from solarfault.cli import main; main()", *args],
        capture_output=True, text=True)


def test_exit_code_usage_error():
    proc = run_main("score", "--detector", "vae")
    assert proc.returncode == 2


def test_exit_code_data_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    proc = run_main("ingest", "--data", str(empty), "--out", str(tmp_path / "o"))
    assert proc.returncode == 3
    assert "schema.txt" in proc.stderr


def test_exit_code_success(data_dir, tmp_path):
    proc = run_main("ingest", "--data", str(data_dir),
                    "--out", str(tmp_path / "o"))
    assert proc.returncode == 0
