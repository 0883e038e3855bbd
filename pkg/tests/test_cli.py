import csv
import json
import re

import pytest

from recoproc.cli import run
from recoproc.config import ExperimentConfig

from test_training import SMALL


@pytest.fixture
def cfg_path(tmp_path, tiny_root):
    d = ExperimentConfig.from_dict({**SMALL, "task": {"kind": "super_resolution", "scale": 4},
                                    "schedule": {"lr0": 1e-3, "epochs": 1, "decay_epochs": [], "batch_size": 8},
                                    "recognizer_schedule": {"epochs": 1, "batch_size": 16},
                                    "dataset": {"root": str(tiny_root), "max_train": 16, "max_val": 12},
                                    "output_dir": str(tmp_path / "cfg_out")}).to_dict()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return path


@pytest.fixture
def trained_R(cfg_path, tmp_path, capsys):
    assert run(["pretrain-recognizer", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--name", "R"]) == 0
    capsys.readouterr()
    return tmp_path / "o" / "R" / "R_seed0"


def _hashes(text, role="P"):
    return re.findall(rf"^{role} seed=\d+ hash=([0-9a-f]+)", text, re.M)


class TestErrors:
    def test_no_subcommand(self, capsys):
        assert run([]) == 2

    def test_unknown_flag(self, capsys):
        assert run(["eval", "--bogus"]) == 2
        assert "usage error" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert run(["fly"]) == 2

    def test_bad_config_key(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"schema_version": 1, "mdoe": "ra"}))
        assert run(["train-processor", "--config", str(p)]) == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path, capsys):
        code = run(["eval", "--processor", str(tmp_path / "nope"), "--recognizer", str(tmp_path / "nope")])
        assert code == 1
        assert "NotFound" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert run(["eval", "--config", str(tmp_path / "none.json")]) == 1
        assert "NotFound" in capsys.readouterr().err


class TestLifecycle:
    def test_lambda_zero_matches_plain(self, cfg_path, trained_R, tmp_path, capsys):
        out = str(tmp_path / "o")
        assert run(["train-processor", "--config", str(cfg_path), "--out", out, "--name", "a",
                    "--mode", "ra", "--lambda", "0", "--recognizer", str(trained_R), "--seed", "3"]) == 0
        ra = _hashes(capsys.readouterr().out)
        assert run(["train-processor", "--config", str(cfg_path), "--out", out, "--name", "b",
                    "--mode", "plain", "--seed", "3"]) == 0
        plain = _hashes(capsys.readouterr().out)
        assert ra and ra == plain

    def test_lambda_sweep_csv(self, cfg_path, trained_R, tmp_path, capsys):
        out = tmp_path / "o"
        assert run(["lambda-sweep", "--config", str(cfg_path), "--out", str(out), "--name", "sw",
                    "--recognizer", str(trained_R), "--lambdas", "0,1e-4,1e-3,1e-2"]) == 0
        with open(out / "sw" / "table.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert (out / "sw" / "grids" / "examples.png").is_file()
        assert (out / "sw" / "lambda_curve.png").is_file()

    def test_env_overrides_output(self, cfg_path, trained_R, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("RECOPROC_OUT", str(tmp_path / "env"))
        assert run(["eval", "--config", str(cfg_path), "--recognizer", str(trained_R), "--name", "ev"]) == 0
        assert (tmp_path / "env" / "ev" / "table.csv").is_file()
        assert not (tmp_path / "cfg_out").exists()
        assert re.search(r"psnr=\d+\.\d+ ssim=", capsys.readouterr().out)

    def test_eval_transfer_and_report(self, cfg_path, trained_R, tmp_path, capsys):
        out = str(tmp_path / "o")
        assert run(["train-processor", "--config", str(cfg_path), "--out", out, "--name", "p"]) == 0
        P = f"{out}/p/P_seed0"
        assert run(["eval", "--config", str(cfg_path), "--out", out, "--name", "ev", "--processor", P,
                    "--recognizer", str(trained_R)]) == 0
        assert run(["transfer-matrix", "--config", str(cfg_path), "--out", out, "--name", "tm",
                    "--processors", f"r={P}", "--recognizers", f"r={trained_R}", "--baseline", P]) == 0
        assert (tmp_path / "o" / "tm" / "transfer_heatmap.png").is_file()
        assert run(["report", f"{out}/ev/records.jsonl", f"{out}/tm/table.csv", "--out", out,
                    "--experiment", "merged"]) == 0
        with open(tmp_path / "o" / "merged" / "table.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 1 + 2

    def test_role_mismatch_is_error(self, cfg_path, trained_R, tmp_path, capsys):
        assert run(["eval", "--config", str(cfg_path), "--processor", str(trained_R),
                    "--recognizer", str(trained_R)]) == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_degrade(self, tiny_root, tmp_path, capsys):
        from PIL import Image

        assert run(["degrade", str(tiny_root / "val"), str(tmp_path / "d"), "--kind", "super_resolution",
                    "--scale", "4"]) == 0
        outs = sorted((tmp_path / "d").rglob("*.png"))
        assert len(outs) == 24 and Image.open(outs[0]).size == (8, 8)

    def test_make_dataset(self, tmp_path, capsys):
        assert run(["make-dataset", str(tmp_path / "ds"), "--num-classes", "2", "--train-per-class", "2",
                    "--val-per-class", "1"]) == 0
        assert len(list((tmp_path / "ds" / "train").rglob("*.png"))) == 4
