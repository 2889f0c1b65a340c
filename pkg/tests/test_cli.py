import subprocess
import sys

import numpy as np
import pytest

from clora_lab.harness import checkpoint, config, reports
from clora_lab.harness.cli import main
from clora_lab.harness.config import ExperimentConfig
from clora_lab.harness.data import SyntheticTaskSpec
from clora_lab.model import TinyModelConfig
from clora_lab.trainer import TrainConfig

SMALL = ExperimentConfig(
    model=TinyModelConfig(input_dim=8, hidden_dim=8, rank=2, alpha=4.0),
    train=TrainConfig(epochs=2, batch_size=16),
    data=SyntheticTaskSpec(input_dim=8, train_size=48, test_size=24),
    num_tasks=2,
    measure_samples=10,
)


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "small.yaml"
    config.save(SMALL, path)
    return str(path)


def test_train_then_measure(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", cfg_path, "--out", str(out), "--method", "clora", "--k", "2"]) == 0
    assert (out / "checkpoint.bin").exists() and (out / "config.yaml").exists()
    assert (out / "train_report.json").exists()
    assert main(["measure", "--config", str(out / "config.yaml")]) == 0
    header, rows = reports.read_rows(out / "measure.csv")
    assert header == reports.MEASURE_HEADER
    assert [r["target"] for r in rows] == ["mlp_down", "mlp_up", "mean", "mean"]
    assert rows[-1]["method"] == "reference" and rows[-1]["capacity"] == ""
    assert float(rows[2]["capacity"]) > 0
    assert "capacity" in capsys.readouterr().out


def test_train_resume_matches_single_run(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", cfg_path, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg_path, "--out", str(b), "--max-steps", "3"]) == 0
    assert main(["train", "--config", cfg_path, "--out", str(b), "--resume"]) == 0
    cfg = config.load(cfg_path)
    ma, sa = checkpoint.load(a / "checkpoint.bin", config.with_overrides(cfg, out=a))
    mb, sb = checkpoint.load(b / "checkpoint.bin", config.with_overrides(cfg, out=b))
    assert sa.step == sb.step
    for name in ma.adapters:
        assert np.array_equal(ma.adapters[name].b, mb.adapters[name].b)


def test_continual_sweep_and_report(tmp_path, cfg_path, capsys):
    out = tmp_path / "r"
    assert main(["continual", "--config", cfg_path, "--out", str(out)]) == 0
    _, rows = reports.read_rows(out / "continual.csv")
    assert [(r["stage"], r["task"]) for r in rows] == [("1", "1"), ("2", "1"), ("2", "2")]
    assert main(["sweep-k", "--config", cfg_path, "--out", str(out), "--k-values", "0,2", "--seeds", "0"]) == 0
    _, rows = reports.read_rows(out / "sweep_k.csv")
    assert [r["k"] for r in rows] == ["0", "2"]
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    header, rows = reports.read_rows(out / "summary.csv")
    assert header[0] == "source"
    assert {r["source"] for r in rows} == {"continual.csv", "sweep_k.csv"}
    assert "sweep_k.csv" in capsys.readouterr().out


def test_errors_are_one_line(tmp_path, cfg_path, capsys):
    assert main(["measure", "--config", cfg_path, "--out", str(tmp_path / "empty")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("clora-lab measure: error:") and err.count("\n") == 1
    assert main(["report", "--out", str(tmp_path / "empty")]) == 1
    assert main(["sweep-k", "--config", cfg_path, "--k-values", "4,2"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("nope: 1\n")
    assert main(["train", "--config", str(bad)]) == 1


def test_report_numbers_use_dot_decimal(tmp_path):
    path = tmp_path / "x.csv"
    reports.write_rows(path, ["a", "b"], [{"a": 0.5, "b": None}])
    assert path.read_text() == "a,b\n0.5,\n"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "clora_lab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "sweep-k" in res.stdout
