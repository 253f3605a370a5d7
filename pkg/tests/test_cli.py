import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from splinenet.cli import ConfigError, main, parse_config
from splinenet.network import Architecture, init_network, load_network


def write_config(tmp_path, **extra):
    cfg = {
        "model": {"family": "lcn", "hidden": [4], "num_basis": 8, "degree": 3},
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.003},
        "dataset": {"kind": "symbolic", "task": "f1", "n_samples": 96, "seed": 1},
        "out_dir": str(tmp_path / "run"),
        "seed": 5,
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=1))
    return path


class TestParseConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"dataset": {"kind": "symbolic", "task": "f1"}}))
        cfg = parse_config(path)
        assert cfg.model["degree"] == 3
        assert cfg.model["num_basis"] == 8
        assert cfg.train.optimizer == "adam"
        assert cfg.train.learning_rate == 1e-3
        assert cfg.train.loss == "mse"  # symbolic datasets are regression
        assert cfg.dataset["split_fraction"] == 0.8

    def test_typo_key_named_with_line(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(
            '{\n "dataset": {"kind": "symbolic", "task": "f1"},\n'
            ' "train": {"learning_rte": 0.01}\n}'
        )
        with pytest.raises(ConfigError, match=r"learning_rte.*line 3"):
            parse_config(path)

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"dataset": {"kind": "symbolic", "task": "f1"}, "moddel": {}}')
        with pytest.raises(ConfigError, match="moddel"):
            parse_config(path)

    def test_flag_overrides_file_value(self, tmp_path):
        path = write_config(tmp_path)
        cfg = parse_config(path, {"learning_rate": 0.01})
        assert cfg.train.learning_rate == 0.01

    def test_bad_train_value_rejected(self, tmp_path):
        path = write_config(tmp_path, train={"batch_size": 0})
        with pytest.raises(ConfigError, match="train"):
            parse_config(path)

    def test_missing_dataset_file(self, tmp_path):
        path = write_config(
            tmp_path, dataset={"kind": "csv", "path": "nope.csv", "schema": "nope.json"}
        )
        with pytest.raises(ConfigError, match="missing file"):
            parse_config(path)

    def test_unknown_dataset_kind(self, tmp_path):
        path = write_config(tmp_path, dataset={"kind": "parquet"})
        with pytest.raises(ConfigError, match="kind"):
            parse_config(path)

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(path)


class TestCommands:
    def test_train_then_eval_replays_exactly(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["train", "--config", str(config)]) == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        run_dir = tmp_path / "run"
        assert (run_dir / "model.npz").exists()

        with open(run_dir / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        final_test = float(rows[-1]["test_acc"])

        assert main([
            "eval", "--config", str(config), "--checkpoint", str(run_dir / "model.npz"),
        ]) == 0
        record = json.loads(capsys.readouterr().out.strip())
        assert record["metric"] == "mse"
        assert record["value"] == final_test == summary["final_test_metric"]

    def test_train_zero_epochs_checkpoint_is_init(self, tmp_path, capsys):
        config = write_config(tmp_path, train={"epochs": 0})
        assert main(["train", "--config", str(config)]) == 0
        net = load_network(tmp_path / "run" / "model.npz")
        arch = Architecture("lcn", 1, 1, (4,), num_basis=8, degree=3)
        fresh = init_network(arch, seed=5)
        for (_, a), (_, b) in zip(net.parameters(), fresh.parameters()):
            npt.assert_array_equal(a, b)

    def test_deterministic_checkpoints(self, tmp_path, capsys):
        config = write_config(tmp_path)
        main(["train", "--config", str(config)])
        first = (tmp_path / "run" / "model.npz").read_bytes()
        main(["train", "--config", str(config)])
        assert (tmp_path / "run" / "model.npz").read_bytes() == first

    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.strip().splitlines()]
        assert lines[-1]["max_rel_error"] <= 1e-5
        assert {rec["family"] for rec in lines[:-1]} == {"lcn", "mlp", "kan"}

    def test_gen_data_then_train_csv(self, tmp_path, capsys):
        assert main([
            "gen-data", "--task", "f2", "--n", "120", "--seed", "3",
            "--out", str(tmp_path / "data"),
        ]) == 0
        record = json.loads(capsys.readouterr().out.strip())
        assert Path(record["csv"]).exists()

        config = write_config(
            tmp_path,
            dataset={
                "kind": "csv",
                "path": record["csv"],
                "schema": record["schema"],
                "normalize": False,
            },
        )
        assert main(["train", "--config", str(config)]) == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["epochs"] == 2

    def test_sweep_command(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            sweep={"families": ["lcn", "mlp"], "budgets": [300], "seeds": [0]},
        )
        assert main(["sweep", "--config", str(config)]) == 0
        out_dir = tmp_path / "run"
        with open(out_dir / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["family"] for r in rows} == {"lcn", "mlp"}

    def test_bench_command(self, capsys):
        assert main(["bench", "--batch", "16", "--width", "8", "--repeats", "1"]) == 0
        out = capsys.readouterr().out
        assert "kernel" in out and "python" in out

    def test_bad_config_exits_one(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text('{"dataset": {"kind": "symbolic", "task": "f1"}, "oops": 1}')
        assert main(["train", "--config", str(path)]) == 1
        assert "oops" in capsys.readouterr().err

    def test_missing_config_exits_one(self, capsys):
        assert main(["train", "--config", "/nonexistent.json"]) == 1

    def test_runtime_failure_exits_two(self, tmp_path, capsys):
        # divergence is a runtime failure, not a config problem
        config = write_config(
            tmp_path,
            train={"epochs": 40, "learning_rate": 1e9, "optimizer": "sgd"},
        )
        assert main(["train", "--config", str(config)]) == 2
        assert "runtime error" in capsys.readouterr().err


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "splinenet", "gradcheck", "--seed", "1", "--family", "mlp"],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
