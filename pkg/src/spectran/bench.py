"""Performance measurement and analysis: wall-time scaling of filtered vs
vanilla encoders, an analytic FLOPs model, retention-ratio sweeps, and
hidden-state spectrum reports."""

from __future__ import annotations

import csv
import hashlib
import io
import time
from dataclasses import dataclass, replace

import numpy as np

from . import dct as _dct
from . import tasks, trainer
from .autograd import no_grad
from .model import ModelConfig, build_model

# Accounting convention, embedded in every report:
FLOPS_ASSUMPTIONS = (
    "2 FLOPs per multiply-add; "
    "per transformer layer: QKV+output projections 4*N*D^2 MACs, "
    "attention scores and weighted sum 2*N^2*D MACs, "
    "feed-forward 2*N*D*F MACs; "
    "decoder cross-attention: (2*T + 2*N)*D^2 + 2*T*N*D MACs; "
    "each spectral filter: 2*(N*log2(N) + M*log2(M))*D FFT FLOPs (5x rule "
    "folded into the constant), counted only when it actually shortens the "
    "sequence (an r=1 filter is a no-op); "
    "embeddings, softmax, layer norms and the output head are not counted"
)


@dataclass
class BenchResult:
    config_id: str
    sequence_length: int
    batch_size: int
    repeats: int
    median_seconds: float
    p10_seconds: float
    p90_seconds: float
    peak_memory_bytes: int
    speedup_vs_baseline: float

    CSV_HEADER = ("config_id,sequence_length,batch_size,repeats,"
                  "median_seconds,p10_seconds,p90_seconds,"
                  "peak_memory_bytes,speedup_vs_baseline")

    def csv_row(self) -> str:
        return (f"{self.config_id},{self.sequence_length},{self.batch_size},"
                f"{self.repeats},{self.median_seconds:.6f},"
                f"{self.p10_seconds:.6f},{self.p90_seconds:.6f},"
                f"{self.peak_memory_bytes},{self.speedup_vs_baseline:.4f}")


# ---------------- analytic FLOPs ----------------

def _layer_flops(n: int, d: int, f: int) -> float:
    """Encoder/decoder self-attention layer at sequence length n."""
    projections = 4 * n * d * d
    attention = 2 * n * n * d
    ffn = 2 * n * d * f
    return 2.0 * (projections + attention + ffn)


def _cross_attention_flops(t: int, n: int, d: int) -> float:
    projections = (2 * t + 2 * n) * d * d
    attention = 2 * t * n * d
    return 2.0 * (projections + attention)


def _fft_flops(n: int, m: int, d: int) -> float:
    return 2.0 * d * (n * np.log2(max(n, 2)) + m * np.log2(max(m, 2)))


@dataclass
class FlopsModel:
    config: ModelConfig
    input_length: int
    output_length: int | None = None

    def encoder_flops(self, with_filters: bool = True) -> float:
        cfg = self.config
        total = 0.0
        n = self.input_length
        filters = {f.after_layer: f for f in (cfg.filters if with_filters else [])}
        for i in range(cfg.encoder_layers):
            total += _layer_flops(n, cfg.dim, cfg.ffn_dim)
            if i in filters:
                m = _dct.retained_bins(n, filters[i].retain_ratio)
                if m < n:  # an r=1 filter is a no-op and costs nothing here
                    total += _fft_flops(n, m, cfg.dim)
                    n = m
        return total

    def decoder_flops(self) -> float:
        cfg = self.config
        if cfg.mode != "encoder-decoder":
            return 0.0
        t = self.output_length
        if t is None:
            raise ValueError("encoder-decoder FLOPs need an output length")
        # the bridge restores the memory to full input length
        per_layer = _layer_flops(t, cfg.dim, cfg.ffn_dim) + \
            _cross_attention_flops(t, self.input_length, cfg.dim)
        return cfg.decoder_layers * per_layer

    def total(self, with_filters: bool = True) -> float:
        if with_filters:
            return self.encoder_flops(True) + self.decoder_flops()
        return self.encoder_flops(False) + self.decoder_flops()


def flops_estimate(cfg: ModelConfig, input_length: int,
                   output_length: int | None = None) -> dict:
    """Closed-form FLOPs for the filtered model and its vanilla twin.

    ``ratio`` is vanilla FLOPs divided by filtered FLOPs.
    """
    fm = FlopsModel(cfg, input_length, output_length)
    filtered = fm.total(with_filters=True)
    vanilla = fm.total(with_filters=False)
    return {
        "assumptions": FLOPS_ASSUMPTIONS,
        "input_length": input_length,
        "output_length": output_length,
        "filtered_flops": filtered,
        "vanilla_flops": vanilla,
        "ratio": vanilla / filtered,
    }


# ---------------- wall-time benchmark ----------------

def _activation_peak_bytes(cfg: ModelConfig, n: int, batch: int,
                           itemsize: int = 4) -> int:
    """High-water estimate of forward activation buffers (not OS RSS).

    Counts the dominating per-layer buffers at the length each layer runs
    at: attention scores (capped by the chunking limit) plus a handful of
    hidden-state sized temporaries.
    """
    from .nn import ATTENTION_CHUNK_ELEMENTS
    peak = 0
    lengths = cfg.block_lengths(n)
    boundaries = {f.after_layer: i + 1 for i, f in enumerate(cfg.filters)}
    cur = lengths[0]
    for i in range(cfg.encoder_layers):
        scores = min(batch * cfg.heads * cur * cur, ATTENTION_CHUNK_ELEMENTS)
        hidden = batch * cur * max(cfg.dim * 6, cfg.ffn_dim * 2)
        peak = max(peak, scores * 3 + hidden)
        if i in boundaries:
            cur = lengths[boundaries[i]]
    return peak * itemsize


def config_id(cfg: ModelConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()[:12]


def bench_forward(cfg: ModelConfig, lengths, batch: int = 16,
                  repeats: int = 5, warmup: int = 1,
                  seed: int = 0) -> list[BenchResult]:
    """Median forward wall time of the filtered model vs its vanilla twin.

    Returns two BenchResults per length (vanilla first); the filtered row
    carries speedup = vanilla median / filtered median.
    """
    if repeats < 5:
        raise ValueError("need at least 5 repeats for stable medians")
    results = []
    vanilla_cfg = cfg.without_filters()
    for n in lengths:
        run_cfg = replace(cfg, max_len=max(cfg.max_len, n))
        run_vanilla = replace(vanilla_cfg, max_len=max(cfg.max_len, n))
        rng = np.random.default_rng(seed)
        tokens = rng.integers(1, cfg.vocab_size, (batch, n))
        medians = {}
        for label, c in (("vanilla", run_vanilla), ("filtered", run_cfg)):
            m = build_model(c, seed=seed).astype(np.float32)
            times = []
            try:
                with no_grad():
                    for rep in range(warmup + repeats):
                        t0 = time.perf_counter()
                        m.forward(tokens)
                        dt = time.perf_counter() - t0
                        if rep >= warmup:
                            times.append(dt)
            except MemoryError:
                # capped data point: infinite time, zero speedup, kept in CSV
                times = [float("inf")] * repeats
            times = np.array(times)
            medians[label] = float(np.median(times))
            results.append(BenchResult(
                config_id=f"{label}-{config_id(c)}",
                sequence_length=n,
                batch_size=batch,
                repeats=repeats,
                median_seconds=float(np.median(times)),
                p10_seconds=float(np.quantile(times, 0.1)),
                p90_seconds=float(np.quantile(times, 0.9)),
                peak_memory_bytes=_activation_peak_bytes(c, n, batch),
                speedup_vs_baseline=1.0 if label == "vanilla"
                else medians["vanilla"] / medians["filtered"],
            ))
    return results


def results_to_csv(results: list[BenchResult]) -> str:
    lines = [BenchResult.CSV_HEADER]
    lines.extend(r.csv_row() for r in results)
    return "\n".join(lines) + "\n"


# ---------------- retention sweep ----------------

def retention_sweep(cfg: ModelConfig, spec: tasks.DatasetSpec,
                    ratios, tc: trainer.TrainConfig) -> list[dict]:
    """Train one model per retaining ratio; report final validation accuracy.

    Filters keep their placement; only the ratio is swept. Divergent runs
    are recorded with accuracy NaN and a guard flag instead of crashing.
    """
    rows = []
    for r in ratios:
        swept = replace(cfg, filters=[replace(f, retain_ratio=r)
                                      for f in cfg.filters])
        try:
            _, _, _, metrics = trainer.train_on_task(swept, spec, tc)
            final = [m for m in metrics if "val_acc" in m][-1]
            rows.append({"ratio": r, "val_acc": final["val_acc"],
                         "steps": final["step"], "diverged": False})
        except FloatingPointError:
            rows.append({"ratio": r, "val_acc": float("nan"),
                         "steps": 0, "diverged": True})
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["ratio", "val_acc", "steps",
                                             "diverged"])
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# ---------------- spectrum report ----------------

@dataclass
class SpectrumReport:
    layer_names: list[str]
    curves: list[np.ndarray]     # per-layer mean amplitude per frequency bin
    centroids: list[float]
    normalized_centroids: list[float]   # centroid / (num_bins - 1)


def spectrum_report(model, dataset, layers=None, batch_size: int = 32,
                    max_batches: int | None = None) -> SpectrumReport:
    """Per-layer power spectra of encoder hidden states over a dataset.

    Layer 0 is the embedding output; layer i is the output of encoder
    layer i-1. ``layers`` selects indices into that list.
    """
    encoder = model.encoder if hasattr(model, "encoder") else model
    n_layers = len(encoder.layers) + 1
    if layers is None:
        layers = list(range(n_layers))
    for idx in layers:
        if not 0 <= idx < n_layers:
            raise ValueError(f"layer index {idx} out of range 0..{n_layers - 1}")
    streams = [[] for _ in layers]
    with no_grad():
        for i, (tokens, _, lengths) in enumerate(
                tasks.batch_iter(dataset, batch_size, shuffle=False)):
            if max_batches is not None and i >= max_batches:
                break
            capture = []
            encoder.forward(tokens, lengths, capture=capture)
            for j, idx in enumerate(layers):
                streams[j].append(capture[idx])
    names, curves, cents, ncents = [], [], [], []
    for j, idx in enumerate(layers):
        curve = _dct.power_spectrum(streams[j])
        names.append("embedding" if idx == 0 else f"layer{idx - 1}")
        curves.append(curve)
        c = _dct.spectral_centroid(curve)
        cents.append(c)
        ncents.append(c / max(curve.size - 1, 1))
    return SpectrumReport(names, curves, cents, ncents)


def spectrum_to_csv(report: SpectrumReport) -> str:
    lines = ["layer,centroid,normalized_centroid,amplitudes"]
    for name, c, nc, curve in zip(report.layer_names, report.centroids,
                                  report.normalized_centroids, report.curves):
        amp = ";".join(f"{a:.6g}" for a in curve)
        lines.append(f"{name},{c:.6f},{nc:.6f},{amp}")
    return "\n".join(lines) + "\n"
