import json
import os

import numpy as np
import pytest

from spectran import cli, dct


def run(argv):
    return cli.main(argv)


class TestDctSubcommand:
    def test_forward_matches_library(self, tmp_path, capsys):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        src = tmp_path / "in.txt"
        src.write_text(",".join(map(str, x)) + "\n")
        assert run(["dct", str(src)]) == 0
        out = np.array([float(v) for v in
                        capsys.readouterr().out.strip().split(",")])
        assert np.allclose(out, dct.dct_fft(x), atol=1e-9)

    def test_inverse_round_trip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal(16)
        src = tmp_path / "in.txt"
        mid = tmp_path / "mid.txt"
        back = tmp_path / "out.txt"
        src.write_text(",".join(map(str, x)) + "\n")
        assert run(["dct", str(src), "--output", str(mid)]) == 0
        assert run(["dct", str(mid), "--inverse", "--output", str(back)]) == 0
        got = np.array([float(v) for v in
                        back.read_text().strip().split(",")])
        assert np.abs(got - x).max() < 1e-8

    def test_ratio_truncates(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text(",".join(["1"] * 10) + "\n")
        assert run(["dct", str(src), "--ratio", "0.5"]) == 0
        out = capsys.readouterr().out.strip().split(",")
        assert len(out) == 5

    def test_bad_input_exit_code_1(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text("1,banana,3\n")
        assert run(["dct", str(src)]) == 1

    def test_bad_strategy_exit_code_1(self, tmp_path):
        src = tmp_path / "in.txt"
        src.write_text("1,2\n")
        assert run(["dct", str(src), "--ratio", "0.5",
                    "--strategy", "nope"]) == 1


class TestArgumentHandling:
    def test_unknown_subcommand_exit_1(self):
        assert run(["frobnicate"]) == 1

    def test_missing_config_exit_1(self, tmp_path, capsys):
        assert run(["eval", "--checkpoint", str(tmp_path / "none")]) == 1

    def test_env_overrides_default_and_flag_overrides_env(self, tmp_path,
                                                          monkeypatch,
                                                          capsys):
        # precedence: default < SPECTRAL_* environment < flag
        x = "1,2,3,4"
        src = tmp_path / "in.txt"
        src.write_text(x + "\n")
        args = cli.build_parser().parse_args(["train", "--config",
                                              "byte-classify"])
        assert cli._resolve(args.steps, "steps", None, 300) == 300
        monkeypatch.setenv("SPECTRAL_STEPS", "42")
        assert int(cli._resolve(args.steps, "steps", None, 300)) == 42
        assert int(cli._resolve(7, "steps", None, 300)) == 7


class TestTrainEvalRoundTrip:
    @pytest.fixture
    def mini_config(self, tmp_path):
        cfg = {
            "mode": "encoder-only", "encoder_layers": 1, "dim": 8,
            "heads": 2, "ffn_dim": 16, "vocab_size": 265, "num_classes": 2,
            "max_len": 32,
            "filters": [{"after_layer": 0, "retain_ratio": 0.5,
                         "strategy": "high-frequency-cut"}],
        }
        p = tmp_path / "mini.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_train_writes_manifest_metrics_checkpoint(self, mini_config,
                                                      tmp_path, monkeypatch):
        monkeypatch.setenv("SPECTRAL_STEPS", "3")
        out = tmp_path / "run"
        code = run(["train", "--config", str(mini_config), "--task",
                    "byte-classify", "--out", str(out), "--batch-size", "4",
                    "--dataset-size", "40"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["dim"] == 8
        assert "config_hash" in manifest and "versions" in manifest
        assert (out / "metrics.jsonl").exists()
        assert (out / "checkpoint" / "weights.bin").exists()
        assert not (out / ".lock").exists()  # released on success

    def test_locked_directory_rejected(self, mini_config, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / ".lock").touch()
        code = run(["train", "--config", str(mini_config), "--task",
                    "byte-classify", "--out", str(out)])
        assert code == 1

    def test_eval_reads_checkpoint(self, mini_config, tmp_path, monkeypatch,
                                   capsys):
        monkeypatch.setenv("SPECTRAL_STEPS", "3")
        out = tmp_path / "run"
        assert run(["train", "--config", str(mini_config), "--task",
                    "byte-classify", "--out", str(out), "--batch-size", "4",
                    "--dataset-size", "40"]) == 0
        capsys.readouterr()
        code = run(["eval", "--config", str(mini_config), "--task",
                    "byte-classify", "--checkpoint", str(out / "checkpoint"),
                    "--dataset-size", "40"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["accuracy"] <= 1.0


class TestBenchSubcommand:
    def test_bench_writes_csv_and_flops(self, tmp_path):
        out = tmp_path / "bench"
        cfg = {
            "mode": "encoder-only", "encoder_layers": 2, "dim": 8,
            "heads": 2, "ffn_dim": 16, "vocab_size": 32, "num_classes": 2,
            "max_len": 64,
            "filters": [{"after_layer": 0, "retain_ratio": 0.5,
                         "strategy": "high-frequency-cut"}],
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        code = run(["bench", "--config", str(p), "--lengths", "16,32",
                    "--batch-size", "2", "--repeats", "5",
                    "--out", str(out)])
        assert code == 0
        csv_text = (out / "bench.csv").read_text()
        assert csv_text.count("\n") == 5  # header + 4 rows
        flops = json.loads((out / "flops.json").read_text())
        assert flops["ratio"] > 1.0
        assert "assumptions" in flops
