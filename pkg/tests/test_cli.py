import os

import numpy as np
import pytest

from itfkan.cli import (
    ConfigError,
    RunConfig,
    load_config,
    main,
    parse_config_text,
    resolve_config,
)
from itfkan.data import synthetic_series, write_csv


def write_config(path, **overrides):
    base = dict(
        dataset="", task="long", lookback=16, horizon=8, embed_dim=2, kernel=5,
        trend_degree=2, top_k=2, patch_len=4, stride=4, reg_lambda=0.01,
        lr=0.005, batch_size=8, epochs=2, patience=2, seed=3, out="",
        split="ratio", frequency="hourly",
    )
    base.update(overrides)
    text = "".join(f"{k} = {v}\n" for k, v in base.items())
    path.write_text(text)
    return base


@pytest.fixture()
def workspace(tmp_path):
    data_path = tmp_path / "panel.csv"
    write_csv(str(data_path), synthetic_series(420, 2, seed=11), ["a", "b"])
    cfg_path = tmp_path / "run.cfg"
    out_dir = tmp_path / "run-out"
    write_config(cfg_path, dataset=str(data_path), out=str(out_dir))
    return cfg_path, out_dir


# --- config parsing -------------------------------------------------------------

def test_config_round_trip():
    cfg = RunConfig(dataset="x.csv", lookback=96, horizon=96)
    reparsed = resolve_config(parse_config_text(cfg.as_lines()))
    assert reparsed == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys: lokback"):
        resolve_config(parse_config_text("dataset = a\nlokback = 96\nhorizon = 4\nlookback = 8\n"))


def test_missing_required_key_names_it():
    with pytest.raises(ConfigError, match="dataset"):
        resolve_config(parse_config_text("lookback = 8\nhorizon = 4\n"))


def test_comments_and_blanks_ignored():
    raw = parse_config_text("# top\ndataset = a.csv  # inline\n\nlookback = 8\nhorizon = 4\n")
    cfg = resolve_config(raw)
    assert cfg.dataset == "a.csv"


def test_bad_value_type_rejected():
    with pytest.raises(ConfigError, match="lookback"):
        resolve_config(parse_config_text("dataset = a\nlookback = soon\nhorizon = 4\n"))


def test_etth1_preset_matches_reference_settings():
    cfg = load_config(os.path.join(os.path.dirname(__file__), "..", "configs", "etth1.cfg"))
    assert cfg.embed_dim == 32
    assert cfg.batch_size == 64
    assert cfg.lr == 0.0005
    assert cfg.stride == 6
    assert cfg.patch_len == 6
    assert cfg.lookback == 96 and cfg.horizon == 96


# --- train ----------------------------------------------------------------------

def test_train_missing_dataset_key_exits_2(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("lookback = 8\nhorizon = 4\n")
    code = main(["train", "--config", str(cfg_path)])
    assert code == 2
    assert "dataset" in capsys.readouterr().err


def test_train_missing_file_exits_2(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "absent.cfg")])
    assert code == 2


def test_train_writes_artifacts(workspace, capsys):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    for artifact in (
        "resolved_config.txt", "history.tsv", "checkpoint.itfk",
        "checkpoint.itfk.stats", "metrics.txt",
    ):
        assert (out_dir / artifact).exists(), artifact
    stdout = capsys.readouterr().out
    assert "mse=" in stdout
    metrics_text = (out_dir / "metrics.txt").read_text()
    for line in metrics_text.strip().splitlines():
        key, value = line.split("=")
        assert len(value.split(".")[1]) == 6  # fixed 6-decimal rendering


def test_resolved_config_reparses_equal(workspace):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    resolved = (out_dir / "resolved_config.txt").read_text()
    assert resolve_config(parse_config_text(resolved)) == load_config(str(cfg_path))


def test_train_deterministic_byte_identical(tmp_path):
    data_path = tmp_path / "panel.csv"
    write_csv(str(data_path), synthetic_series(420, 2, seed=21), ["a", "b"])
    outputs = []
    for run in ("one", "two"):
        cfg_path = tmp_path / f"{run}.cfg"
        out_dir = tmp_path / run
        write_config(cfg_path, dataset=str(data_path), out=str(out_dir))
        assert main(["train", "--config", str(cfg_path)]) == 0
        outputs.append(
            {
                name: (out_dir / name).read_bytes()
                for name in ("history.tsv", "checkpoint.itfk", "metrics.txt",
                              "checkpoint.itfk.stats")
            }
        )
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], f"{name} differs between runs"


def test_failed_train_removes_partial_artifacts(tmp_path, monkeypatch):
    data_path = tmp_path / "panel.csv"
    write_csv(str(data_path), synthetic_series(420, 2, seed=31), ["a", "b"])
    cfg_path = tmp_path / "run.cfg"
    out_dir = tmp_path / "broken-out"
    write_config(cfg_path, dataset=str(data_path), out=str(out_dir))

    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr("itfkan.cli.train", boom)
    assert main(["train", "--config", str(cfg_path)]) == 1
    assert not (out_dir / "resolved_config.txt").exists()
    assert not (out_dir / "checkpoint.itfk").exists()


# --- eval -----------------------------------------------------------------------

def test_eval_matches_train_metrics(workspace, capsys):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    train_metrics = (out_dir / "metrics.txt").read_text()
    capsys.readouterr()
    assert main([
        "eval", "--config", str(cfg_path),
        "--checkpoint", str(out_dir / "checkpoint.itfk"),
    ]) == 0
    assert capsys.readouterr().out == train_metrics


def test_eval_horizon_mismatch_names_field(workspace, tmp_path, capsys):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    other_cfg = tmp_path / "other.cfg"
    base = write_config(
        other_cfg,
        dataset=parse_config_text(cfg_path.read_text())["dataset"],
        out=str(out_dir),
        horizon=16,
    )
    code = main([
        "eval", "--config", str(other_cfg),
        "--checkpoint", str(out_dir / "checkpoint.itfk"),
    ])
    assert code == 2
    assert "horizon" in capsys.readouterr().err


# --- prune / symbolify / report ------------------------------------------------------

def test_report_pipeline(workspace, tmp_path, capsys):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    report_dir = tmp_path / "report-out"
    assert main([
        "report", "--config", str(cfg_path),
        "--checkpoint", str(out_dir / "checkpoint.itfk"),
        "--tau", "0.02", "--top-m", "2",
        "--out", str(report_dir),
    ]) == 0
    for artifact in (
        "prune_report.txt", "symbolic_report.txt", "symbolic_edges.tsv", "graph.tsv",
    ):
        assert (report_dir / artifact).exists(), artifact

    # cross-file consistency: symbolic rows for adjustable edges == preserved
    prune_lines = (report_dir / "prune_report.txt").read_text().strip().splitlines()[1:]
    preserved = sum(int(line.split("\t")[3]) for line in prune_lines)
    machine_lines = (report_dir / "symbolic_edges.tsv").read_text().strip().splitlines()[1:]
    taylor_rows = [l for l in machine_lines if l.split("\t")[3] not in ("trend-poly", "fourier")]
    assert len(taylor_rows) == preserved


def test_prune_negative_tau_exits_2(workspace, capsys):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    code = main([
        "prune", "--checkpoint", str(out_dir / "checkpoint.itfk"), "--tau", "-1",
    ])
    assert code == 2


def test_prune_writes_report_and_checkpoint(workspace, tmp_path):
    cfg_path, out_dir = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    prune_dir = tmp_path / "prune-out"
    assert main([
        "prune", "--checkpoint", str(out_dir / "checkpoint.itfk"),
        "--tau", "100", "--out", str(prune_dir),
    ]) == 0
    report = (prune_dir / "prune_report.txt").read_text()
    lines = report.strip().splitlines()[1:]
    for line in lines:
        fields = line.split("\t")
        assert fields[3] == "0"  # nothing survives tau=100
    assert (prune_dir / "checkpoint_pruned.itfk").exists()
