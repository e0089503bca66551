from dataclasses import replace

import numpy as np
import pytest

from spectran import bench, tasks, trainer
from spectran.model import FilterSpec, ModelConfig, build_model, presets


def tiny_config(**overrides):
    base = dict(mode="encoder-only", encoder_layers=2, dim=8, heads=2,
                ffn_dim=16, vocab_size=270, num_classes=2, max_len=64,
                filters=[FilterSpec(0, 0.5)])
    base.update(overrides)
    return ModelConfig(**base)


class TestFlopsModel:
    def test_hand_counted_single_layer(self):
        # N=4, D=2, F=4, one head, no filters, brute-force MAC count:
        # projections 4*4*2*2 = 64, attention 2*16*2 = 64, ffn 2*4*2*4 = 64
        cfg = ModelConfig(mode="encoder-only", encoder_layers=1, dim=2,
                          heads=1, ffn_dim=4, vocab_size=4, max_len=4)
        est = bench.flops_estimate(cfg, 4)
        assert est["vanilla_flops"] == 2 * (64 + 64 + 64)
        assert est["filtered_flops"] == est["vanilla_flops"]
        assert est["ratio"] == 1.0

    def test_identity_filters_ratio_exactly_one(self):
        cfg = tiny_config(filters=[FilterSpec(0, 1.0), FilterSpec(1, 1.0)])
        assert bench.flops_estimate(cfg, 64)["ratio"] == 1.0

    def test_filter_reduces_flops(self):
        cfg = tiny_config()
        est = bench.flops_estimate(cfg, 64)
        assert est["filtered_flops"] < est["vanilla_flops"]
        assert est["ratio"] > 1.0

    def test_summarization_scale_anchor(self):
        # 12+12 layer encoder-decoder, half the bins dropped after layer 1,
        # input 766 / output 53: expected savings around 1.6x
        cfg = presets()["bart-like-flops"]
        ratio = bench.flops_estimate(cfg, 766, 53)["ratio"]
        assert 1.3 <= ratio <= 2.0

    def test_long_answer_scale_anchor(self):
        # same model keeping 30% of bins, input 5140 / output 693: around 1.9x
        cfg = replace(presets()["bart-like-flops"],
                      filters=[FilterSpec(1, 0.3)])
        ratio = bench.flops_estimate(cfg, 5140, 693)["ratio"]
        assert 1.5 <= ratio <= 3.0

    def test_assumptions_included(self):
        est = bench.flops_estimate(tiny_config(), 32)
        assert "2 FLOPs per multiply-add" in est["assumptions"]

    def test_decoder_needs_output_length(self):
        cfg = presets()["bart-like-flops"]
        with pytest.raises(ValueError):
            bench.FlopsModel(cfg, 128).total()


class TestBenchForward:
    def test_rows_and_speedup_schema(self):
        cfg = tiny_config()
        results = bench.bench_forward(cfg, [16, 32], batch=2, repeats=5)
        assert len(results) == 4  # vanilla + filtered per length
        assert results[0].config_id.startswith("vanilla-")
        assert results[1].config_id.startswith("filtered-")
        assert results[0].speedup_vs_baseline == 1.0
        assert results[1].speedup_vs_baseline > 0
        for r in results:
            assert r.p10_seconds <= r.median_seconds <= r.p90_seconds
            assert r.peak_memory_bytes > 0

    def test_too_few_repeats_rejected(self):
        with pytest.raises(ValueError):
            bench.bench_forward(tiny_config(), [16], repeats=3)

    def test_csv_shape(self):
        results = bench.bench_forward(tiny_config(), [16], batch=2, repeats=5)
        text = bench.results_to_csv(results)
        lines = text.strip().split("\n")
        assert lines[0] == bench.BenchResult.CSV_HEADER
        assert len(lines) == 3
        assert len(lines[1].split(",")) == len(lines[0].split(","))


class TestRetentionSweep:
    def test_rows_populated_and_identity_close_to_vanilla(self):
        cfg = tiny_config(vocab_size=tasks.BYTE_VOCAB, max_len=64)
        spec = tasks.DatasetSpec(kind="byte-classify", size=200, seed=0,
                                 length=64)
        tc = trainer.TrainConfig(steps=6, batch_size=8, eval_every=6,
                                 eval_batches=2)
        rows = bench.retention_sweep(cfg, spec, [0.5, 1.0], tc)
        assert [r["ratio"] for r in rows] == [0.5, 1.0]
        for r in rows:
            assert not r["diverged"]
            assert 0.0 <= r["val_acc"] <= 1.0

    def test_csv_columns(self):
        text = bench.sweep_to_csv([{"ratio": 0.5, "val_acc": 0.9,
                                    "steps": 10, "diverged": False}])
        lines = text.strip().splitlines()
        assert lines[0] == "ratio,val_acc,steps,diverged"
        assert lines[1].startswith("0.5,0.9")


class TestSpectrumReport:
    def make_dataset(self, n=32, size=8):
        spec = tasks.DatasetSpec(kind="byte-classify", size=size, seed=0,
                                 length=n)
        return tasks.generate(spec)

    def test_layer_names_and_schema(self):
        model = build_model(tiny_config(filters=[]), seed=0)
        report = bench.spectrum_report(model, self.make_dataset())
        assert report.layer_names == ["embedding", "layer0", "layer1"]
        assert len(report.curves) == 3
        assert all(0 <= c for c in report.centroids)
        assert all(0 <= c <= 1 for c in report.normalized_centroids)

    def test_layer_out_of_range(self):
        model = build_model(tiny_config(filters=[]), seed=0)
        with pytest.raises(ValueError):
            bench.spectrum_report(model, self.make_dataset(), layers=[5])

    def test_constant_probe_concentrates_at_dc(self):
        # a constant hidden-state stream puts all energy in bin 0
        from spectran.dct import power_spectrum, spectral_centroid
        h = np.full((4, 32, 8), 0.7)
        curve = power_spectrum([h])
        assert spectral_centroid(curve) < 1e-10

    def test_untrained_model_no_required_ordering(self):
        # control condition: just verify the report runs and is finite
        model = build_model(tiny_config(filters=[]), seed=0)
        report = bench.spectrum_report(model, self.make_dataset())
        assert np.isfinite(report.centroids).all()

    def test_csv_round_numbers(self):
        model = build_model(tiny_config(filters=[]), seed=0)
        report = bench.spectrum_report(model, self.make_dataset())
        text = bench.spectrum_to_csv(report)
        lines = text.strip().split("\n")
        assert lines[0].startswith("layer,centroid")
        assert len(lines) == 4


class TestConfigId:
    def test_stable_and_distinct(self):
        a, b = tiny_config(), tiny_config(dim=16)
        assert bench.config_id(a) == bench.config_id(tiny_config())
        assert bench.config_id(a) != bench.config_id(b)
        assert len(bench.config_id(a)) == 12
