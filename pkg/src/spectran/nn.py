"""Transformer building blocks on the numpy autodiff substrate.

Pre-norm residual blocks, biased-variance layer norm (divide by D),
normal(0, 0.02) init for projections, zero biases.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autograd import (Tensor, add_bias, concat, embedding, gelu, log_softmax,
                       softmax)

NEG_INF = -1e9

# cap on batch*heads*Tq*Tk score elements held at once; larger attention
# calls are chunked over the batch to bound peak memory
ATTENTION_CHUNK_ELEMENTS = 2 ** 24


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.name = name


class Module:
    """Base class: children and parameters are discovered from attributes."""

    def parameters(self):
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Parameter):
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
                    elif isinstance(item, Parameter):
                        out.append(item)
        return out

    def named_parameters(self):
        return [(p.name, p) for p in self.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, d_in, d_out, rng, name, bias=True, init_std=0.02):
        self.weight = Parameter(rng.normal(0.0, init_std, (d_in, d_out)),
                                f"{name}.weight")
        self.bias = Parameter(np.zeros(d_out), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    """Per-position normalization over the hidden dim, biased variance."""

    def __init__(self, dim, name, eps=1e-5):
        self.gain = Parameter(np.ones(dim), f"{name}.gain")
        self.shift = Parameter(np.zeros(dim), f"{name}.shift")
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv = (var + self.eps) ** -0.5
        return centered * inv * self.gain + self.shift


def sinusoidal_positions(max_len: int, dim: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-np.log(10000.0) / dim))
    table = np.zeros((max_len, dim))
    angles = pos * div
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


class Embedding(Module):
    """Token lookup plus additive positional encoding (sinusoidal or learned)."""

    def __init__(self, vocab_size, dim, max_len, rng, name,
                 positional="sinusoidal"):
        self.table = Parameter(rng.normal(0.0, 0.02, (vocab_size, dim)),
                               f"{name}.table")
        self.vocab_size = vocab_size
        # sqrt(D) lookup scaling keeps token content comparable in magnitude
        # to the O(1) sinusoidal position code
        self.scale = float(np.sqrt(dim))
        if positional == "learned":
            self.positions = Parameter(rng.normal(0.0, 0.02, (max_len, dim)),
                                       f"{name}.positions")
            self._fixed = None
        elif positional == "sinusoidal":
            self.positions = None
            self._fixed = sinusoidal_positions(max_len, dim)
        else:
            raise ValueError(f"unknown positional scheme {positional!r}")

    def __call__(self, tokens: np.ndarray) -> Tensor:
        tokens = np.asarray(tokens)
        n = tokens.shape[1]
        emb = embedding(self.table, tokens) * self.scale
        if self.positions is not None:
            return emb + self.positions[:n]
        return add_bias(emb, self._fixed[:n].astype(emb.data.dtype))


def padding_bias(lengths: np.ndarray, batch: int, n_keys: int) -> np.ndarray:
    """Additive [B, 1, 1, Tk] mask: NEG_INF beyond each row's true length."""
    bias = np.zeros((batch, 1, 1, n_keys))
    for b, ln in enumerate(lengths):
        bias[b, :, :, ln:] = NEG_INF
    return bias


def causal_bias(n: int) -> np.ndarray:
    """Additive [1, 1, T, T] mask forbidding attention to future positions."""
    return np.triu(np.full((n, n), NEG_INF), k=1)[None, None]


class MultiHeadAttention(Module):
    def __init__(self, dim, heads, rng, name):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.wq = Linear(dim, dim, rng, f"{name}.wq")
        self.wk = Linear(dim, dim, rng, f"{name}.wk")
        self.wv = Linear(dim, dim, rng, f"{name}.wv")
        self.wo = Linear(dim, dim, rng, f"{name}.wo")

    def _split(self, x: Tensor, batch, n) -> Tensor:
        return x.reshape(batch, n, self.heads, self.head_dim).swapaxes(1, 2)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, bias=None) -> Tensor:
        b, nq, _ = q.shape
        nk = k.shape[1]
        qh = self._split(self.wq(q), b, nq)
        kh = self._split(self.wk(k), b, nk)
        vh = self._split(self.wv(v), b, nk)
        chunk = max(1, ATTENTION_CHUNK_ELEMENTS // (self.heads * nq * nk))
        if chunk >= b:
            ctx = self._attend(qh, kh, vh, bias)
        else:
            parts = []
            for lo in range(0, b, chunk):
                sl = slice(lo, lo + chunk)
                sub_bias = bias[sl] if bias is not None and bias.shape[0] == b \
                    else bias
                parts.append(self._attend(qh[sl], kh[sl], vh[sl], sub_bias))
            ctx = concat(parts, axis=0)
        merged = ctx.swapaxes(1, 2).reshape(b, nq, self.dim)
        return self.wo(merged)

    def _attend(self, qh, kh, vh, bias):
        scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.head_dim))
        if bias is not None:
            scores = add_bias(scores, bias.astype(scores.data.dtype))
        return softmax(scores, axis=-1) @ vh


class FeedForward(Module):
    def __init__(self, dim, hidden, rng, name):
        self.w1 = Linear(dim, hidden, rng, f"{name}.w1")
        self.w2 = Linear(hidden, dim, rng, f"{name}.w2")

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(gelu(self.w1(x)))


class EncoderLayer(Module):
    """Pre-norm block: x + attn(ln(x)), then x + ffn(ln(x))."""

    def __init__(self, dim, heads, ffn_dim, rng, name):
        self.ln1 = LayerNorm(dim, f"{name}.ln1")
        self.attn = MultiHeadAttention(dim, heads, rng, f"{name}.attn")
        self.ln2 = LayerNorm(dim, f"{name}.ln2")
        self.ffn = FeedForward(dim, ffn_dim, rng, f"{name}.ffn")

    def __call__(self, x: Tensor, bias=None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, h, bias)
        x = x + self.ffn(self.ln2(x))
        return x


class DecoderLayer(Module):
    def __init__(self, dim, heads, ffn_dim, rng, name):
        self.ln1 = LayerNorm(dim, f"{name}.ln1")
        self.self_attn = MultiHeadAttention(dim, heads, rng, f"{name}.self_attn")
        self.ln2 = LayerNorm(dim, f"{name}.ln2")
        self.cross_attn = MultiHeadAttention(dim, heads, rng, f"{name}.cross_attn")
        self.ln3 = LayerNorm(dim, f"{name}.ln3")
        self.ffn = FeedForward(dim, ffn_dim, rng, f"{name}.ffn")

    def __call__(self, x: Tensor, memory: Tensor, self_bias=None,
                 cross_bias=None) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, h, self_bias)
        h = self.ln2(x)
        x = x + self.cross_attn(h, memory, memory, cross_bias)
        x = x + self.ffn(self.ln3(x))
        return x


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  ignore_index: int | None = None) -> Tensor:
    """Mean negative log-likelihood over non-ignored positions."""
    targets = np.asarray(targets)
    n_classes = logits.shape[-1]
    flat = logits.reshape(-1, n_classes)
    tgt = targets.reshape(-1)
    if ignore_index is not None:
        keep = tgt != ignore_index
        tgt_checked = tgt[keep]
    else:
        keep = np.ones(tgt.shape, dtype=bool)
        tgt_checked = tgt
    if tgt_checked.size and (tgt_checked.min() < 0 or tgt_checked.max() >= n_classes):
        raise ValueError("target id out of range")
    ls = log_softmax(flat, axis=-1)
    rows = np.arange(tgt.shape[0])
    safe_tgt = np.where(keep, tgt, 0)
    picked = ls[rows, safe_tgt]
    weights = keep.astype(np.float64) / max(int(keep.sum()), 1)
    return -(picked * weights).sum()


def grad_check(f, params, eps: float = 1e-5, max_coords: int = 100,
               seed: int = 0) -> float:
    """Max relative error between reverse-mode and central finite differences.

    Checks every coordinate, or a random subset of ``max_coords`` per
    parameter when a parameter is larger than that.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss in grad_check")
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(fd), abs(aflat[i]), 1e-6)
            worst = max(worst, abs(fd - aflat[i]) / denom)
    return worst


class Adam:
    """Adam with linear warmup and optional cosine decay to 10% of base.

    Decay kicks in after warmup when ``total_steps`` is given; without it
    the learning rate stays at the base value.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 warmup_steps=0, total_steps=None):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.warmup = warmup_steps
        self.total_steps = total_steps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self) -> float:
        if self.warmup and self.step_count < self.warmup:
            return self.lr * (self.step_count + 1) / self.warmup
        if self.total_steps and self.total_steps > self.warmup:
            progress = (self.step_count - self.warmup) / \
                (self.total_steps - self.warmup)
            progress = min(max(progress, 0.0), 1.0)
            floor = 0.1 * self.lr
            return floor + (self.lr - floor) * 0.5 * \
                (1 + np.cos(np.pi * progress))
        return self.lr

    def step(self):
        lr = self.current_lr()
        self.step_count += 1
        b1, b2 = self.betas
        t = self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** t)
            vhat = self.v[i] / (1 - b2 ** t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def save_checkpoint(path, named_params):
    """Manifest (name, shape, offset) + flat little-endian float64 blob."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest, blobs, offset = [], [], 0
    for name, p in named_params:
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    (path / "manifest.json").write_text(
        json.dumps({"dtype": "<f8", "params": manifest}, indent=1))
    (path / "weights.bin").write_bytes(b"".join(blobs))


def load_checkpoint(path, named_params):
    path = Path(path)
    meta = json.loads((path / "manifest.json").read_text())
    blob = np.frombuffer((path / "weights.bin").read_bytes(), dtype="<f8")
    table = {e["name"]: e for e in meta["params"]}
    for name, p in named_params:
        e = table[name]
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = blob[e["offset"]: e["offset"] + size].reshape(e["shape"])
        p.data = arr.astype(p.data.dtype).copy()
