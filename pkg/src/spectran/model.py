"""Transformer hosts for the spectral sequence-compression filter.

Filters sit between encoder layers and shorten the hidden sequence to
ceil(r*N) along time. "after_layer" is 0-based: the filter applies to that
layer's residual-stream output, before the next layer. For encoder-decoder
models every block's output is upsampled back to the input length, summed
and layer-normalized before the decoder cross-attends to it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import dct as _dct
from .autograd import Tensor, spectral_filter, upsample_nearest
from . import nn


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    after_layer: int
    retain_ratio: float
    strategy: str = _dct.HIGH_FREQUENCY_CUT


@dataclass
class ModelConfig:
    mode: str = "encoder-only"            # or "encoder-decoder"
    encoder_layers: int = 4
    decoder_layers: int = 0
    dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    vocab_size: int = 256
    num_classes: int = 2                  # encoder-only head width
    max_len: int = 512
    filters: list = field(default_factory=list)
    head: str = "mean-pool"               # or "first-token"
    positional: str = "sinusoidal"

    def __post_init__(self):
        self.filters = [f if isinstance(f, FilterSpec) else FilterSpec(**f)
                        for f in self.filters]
        self.validate()

    def validate(self):
        if self.mode not in ("encoder-only", "encoder-decoder"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "encoder-only" and self.decoder_layers:
            raise ConfigError("encoder-only mode must have zero decoder layers")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.head not in ("mean-pool", "first-token"):
            raise ConfigError(f"unknown head {self.head!r}")
        prev = -1
        for f in self.filters:
            if not 0 <= f.after_layer < self.encoder_layers:
                raise ConfigError(f"filter index {f.after_layer} out of range")
            if f.after_layer <= prev:
                raise ConfigError("filter positions must be strictly increasing")
            if not 0.0 < f.retain_ratio <= 1.0:
                raise ConfigError(f"retain ratio {f.retain_ratio} not in (0, 1]")
            if f.strategy not in _dct.TRUNCATION_STRATEGIES:
                raise ConfigError(f"unknown strategy {f.strategy!r}")
            prev = f.after_layer

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_json(Path(path).read_text())

    def without_filters(self) -> "ModelConfig":
        d = asdict(self)
        d["filters"] = []
        return ModelConfig(**d)

    def block_lengths(self, n: int) -> list[int]:
        """Sequence length of each block for input length n (first entry n)."""
        lengths = [n]
        for f in self.filters:
            lengths.append(_dct.retained_bins(lengths[-1], f.retain_ratio))
        return lengths


def presets() -> dict[str, ModelConfig]:
    return {
        "lra-text": ModelConfig(
            mode="encoder-only", encoder_layers=4, dim=256, heads=4,
            ffn_dim=1024, vocab_size=267, num_classes=2, max_len=4096,
            filters=[FilterSpec(0, 0.2)]),
        "listops-mini": ModelConfig(
            mode="encoder-only", encoder_layers=4, dim=64, heads=2,
            ffn_dim=128, vocab_size=20, num_classes=10, max_len=256,
            filters=[FilterSpec(0, 0.5)]),
        "byte-classify": ModelConfig(
            mode="encoder-only", encoder_layers=4, dim=64, heads=2,
            ffn_dim=128, vocab_size=267, num_classes=2, max_len=512,
            filters=[FilterSpec(0, 0.2)]),
        "seq2seq-copy": ModelConfig(
            mode="encoder-decoder", encoder_layers=2, decoder_layers=2,
            dim=64, heads=4, ffn_dim=128, vocab_size=24, max_len=80,
            filters=[FilterSpec(0, 0.5)]),
        "bart-like-flops": ModelConfig(
            mode="encoder-decoder", encoder_layers=12, decoder_layers=12,
            dim=1024, heads=16, ffn_dim=4096, vocab_size=50264, max_len=8192,
            filters=[FilterSpec(1, 0.5)]),
    }


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.dim, cfg.max_len, rng,
                                  "encoder.embed", cfg.positional)
        self.layers = [nn.EncoderLayer(cfg.dim, cfg.heads, cfg.ffn_dim, rng,
                                       f"encoder.layer{i}")
                       for i in range(cfg.encoder_layers)]
        self.final_ln = nn.LayerNorm(cfg.dim, "encoder.final_ln")
        self._filters = {f.after_layer: f for f in cfg.filters}

    def forward(self, tokens: np.ndarray, lengths: np.ndarray | None = None,
                capture: list | None = None):
        """Run all blocks. Returns (block_outputs, pooled, seq_lengths).

        ``lengths`` gives per-row true lengths for padding masks; the mask
        is only applied before the first filter, after which positions no
        longer correspond to tokens. ``capture`` collects the embedding
        output and each layer output as plain arrays.
        """
        tokens = np.asarray(tokens)
        b, n = tokens.shape
        if n > self.cfg.max_len:
            raise ConfigError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        h = self.embed(tokens)
        bias = None
        if lengths is not None:
            lengths = np.asarray(lengths)
            if (lengths < n).any():
                bias = nn.padding_bias(lengths, b, n)
        if capture is not None:
            capture.append(h.data.copy())
        block_outputs, seq_lengths = [], [n]
        filtered_yet = False
        for i, layer in enumerate(self.layers):
            h = layer(h, None if filtered_yet else bias)
            if capture is not None:
                capture.append(h.data.copy())
            if i in self._filters:
                f = self._filters[i]
                block_outputs.append(h)
                h = spectral_filter(h, f.retain_ratio, f.strategy)
                seq_lengths.append(h.shape[1])
                filtered_yet = True
        h = self.final_ln(h)
        block_outputs.append(h)
        if self.cfg.head == "mean-pool":
            pooled = h.mean(axis=1)
        else:
            pooled = h[:, 0, :]
        return block_outputs, pooled, seq_lengths


class EncoderClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.classifier = nn.Linear(cfg.dim, cfg.num_classes, rng, "classifier")

    def forward(self, tokens, lengths=None, capture=None) -> Tensor:
        _, pooled, _ = self.encoder.forward(tokens, lengths, capture)
        return self.classifier(pooled)


def bridge_to_decoder(block_outputs, original_len: int,
                      bridge_ln: nn.LayerNorm) -> Tensor:
    """Upsample every block output to the input length, sum, layer-normalize."""
    if not block_outputs:
        raise ValueError("need at least one block output")
    dim = block_outputs[0].shape[-1]
    for blk in block_outputs:
        if blk.shape[-1] != dim:
            raise RuntimeError("dim mismatch across block outputs")
    total = None
    for blk in block_outputs:
        up = upsample_nearest(blk, original_len)
        total = up if total is None else total + up
    return bridge_ln(total)


class EncoderDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig, rng):
        if cfg.mode != "encoder-decoder":
            raise ConfigError("config is not encoder-decoder")
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.bridge_ln = nn.LayerNorm(cfg.dim, "bridge_ln")
        self.tgt_embed = nn.Embedding(cfg.vocab_size, cfg.dim, cfg.max_len, rng,
                                      "decoder.embed", cfg.positional)
        self.dec_layers = [nn.DecoderLayer(cfg.dim, cfg.heads, cfg.ffn_dim, rng,
                                           f"decoder.layer{i}")
                           for i in range(cfg.decoder_layers)]
        self.dec_final_ln = nn.LayerNorm(cfg.dim, "decoder.final_ln")
        self.lm_head = nn.Linear(cfg.dim, cfg.vocab_size, rng, "lm_head")

    def encode(self, src_tokens, src_lengths=None) -> Tensor:
        blocks, _, _ = self.encoder.forward(src_tokens, src_lengths)
        return bridge_to_decoder(blocks, np.asarray(src_tokens).shape[1],
                                 self.bridge_ln)

    def decode(self, memory: Tensor, tgt_tokens: np.ndarray) -> Tensor:
        tgt_tokens = np.asarray(tgt_tokens)
        if tgt_tokens.shape[1] < 1:
            raise ValueError("empty decoder input")
        h = self.tgt_embed(tgt_tokens)
        self_bias = nn.causal_bias(tgt_tokens.shape[1])
        for layer in self.dec_layers:
            h = layer(h, memory, self_bias)
        return self.lm_head(self.dec_final_ln(h))

    def forward(self, src_tokens, tgt_tokens, src_lengths=None) -> Tensor:
        return self.decode(self.encode(src_tokens, src_lengths), tgt_tokens)

    def greedy_decode(self, src_tokens, max_steps: int, bos: int,
                      eos: int | None = None) -> list[list[int]]:
        """Deterministic argmax decoding, one row at a time.

        Ties break toward the lowest token index (np.argmax convention).
        """
        src_tokens = np.asarray(src_tokens)
        results = []
        for row in src_tokens:
            memory = self.encode(row[None, :])
            out = []
            tokens = [bos]
            for _ in range(max_steps):
                logits = self.decode(memory, np.asarray(tokens)[None, :])
                nxt = int(np.argmax(logits.data[0, -1]))
                if eos is not None and nxt == eos:
                    break
                out.append(nxt)
                tokens.append(nxt)
            results.append(out)
        return results


def build_model(cfg: ModelConfig, seed: int = 0):
    rng = np.random.default_rng(seed)
    if cfg.mode == "encoder-only":
        return EncoderClassifier(cfg, rng)
    return EncoderDecoder(cfg, rng)


def train_step(model, optimizer, loss_fn) -> float:
    """One optimization step: zero grads, forward, backward, update."""
    optimizer.zero_grad()
    loss = loss_fn()
    value = float(loss.data)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value}")
    loss.backward()
    optimizer.step()
    return value
