"""Training and evaluation loops for the desk-scale tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, tasks
from .autograd import no_grad
from .model import EncoderClassifier, EncoderDecoder, ModelConfig, build_model, \
    train_step


@dataclass
class TrainConfig:
    steps: int = 600
    batch_size: int = 32
    lr: float = 1e-3
    warmup_steps: int = 50
    seed: int = 0
    dtype: str = "float32"     # training precision; tests use float64 models
    eval_every: int = 50
    eval_batches: int = 16
    target_accuracy: float | None = None   # early stop once reached
    min_steps: int = 0


def _classifier_batches(dataset, batch_size, seed, epochs=1000):
    for epoch in range(epochs):
        yield from tasks.batch_iter(dataset, batch_size, seed=seed + epoch)


def eval_classifier(model: EncoderClassifier, dataset, batch_size=64,
                    max_batches=None) -> tuple[float, float]:
    """Return (accuracy, mean loss) over the dataset."""
    correct = total = 0
    loss_sum = 0.0
    with no_grad():
        for i, (tokens, targets, lengths) in enumerate(
                tasks.batch_iter(dataset, batch_size, shuffle=False)):
            if max_batches is not None and i >= max_batches:
                break
            logits = model.forward(tokens, lengths)
            pred = np.argmax(logits.data, axis=-1)
            correct += int((pred == targets).sum())
            total += len(targets)
            loss_sum += float(nn.cross_entropy(logits, targets).data) * len(targets)
    return correct / total, loss_sum / total


def train_classifier(model: EncoderClassifier, train_set, val_set,
                     tc: TrainConfig):
    """Train with Adam + warmup + cosine decay; returns the metrics history."""
    opt = nn.Adam(model.parameters(), lr=tc.lr, warmup_steps=tc.warmup_steps,
                  total_steps=tc.steps)
    metrics = []
    batches = _classifier_batches(train_set, tc.batch_size, tc.seed)
    for step in range(1, tc.steps + 1):
        tokens, targets, lengths = next(batches)

        def loss_fn():
            return nn.cross_entropy(model.forward(tokens, lengths), targets)

        loss = train_step(model, opt, loss_fn)
        if step % tc.eval_every == 0 or step == tc.steps:
            acc, vloss = eval_classifier(model, val_set,
                                         max_batches=tc.eval_batches)
            metrics.append({"step": step, "train_loss": round(loss, 6),
                            "val_acc": round(acc, 4),
                            "val_loss": round(vloss, 6)})
            if (tc.target_accuracy is not None and acc >= tc.target_accuracy
                    and step >= tc.min_steps):
                break
        else:
            metrics.append({"step": step, "train_loss": round(loss, 6)})
    return metrics


def seq2seq_arrays(tokens, targets, bos=tasks.COPY_BOS, eos=tasks.COPY_EOS):
    """Teacher-forcing inputs/outputs: decoder sees BOS+target, predicts target+EOS."""
    b, t = targets.shape
    dec_in = np.full((b, t + 1), bos, dtype=np.int64)
    dec_in[:, 1:] = targets
    dec_out = np.full((b, t + 1), eos, dtype=np.int64)
    dec_out[:, :t] = targets
    return dec_in, dec_out


def eval_seq2seq_greedy(model: EncoderDecoder, dataset, max_rows=64) -> float:
    """Exact-token accuracy of greedy decoding against the targets."""
    correct = total = 0
    rows = dataset[:max_rows]
    src = np.array([ex.tokens for ex in rows], dtype=np.int64)
    with no_grad():
        decoded = model.greedy_decode(src, max_steps=len(rows[0].target) + 2,
                                      bos=tasks.COPY_BOS, eos=tasks.COPY_EOS)
    for ex, out in zip(rows, decoded):
        tgt = list(ex.target)
        total += len(tgt)
        correct += sum(int(i < len(out) and out[i] == t)
                       for i, t in enumerate(tgt))
    return correct / total


def train_seq2seq(model: EncoderDecoder, train_set, val_set, tc: TrainConfig):
    opt = nn.Adam(model.parameters(), lr=tc.lr, warmup_steps=tc.warmup_steps,
                  total_steps=tc.steps)
    metrics = []
    batches = _classifier_batches(train_set, tc.batch_size, tc.seed)
    for step in range(1, tc.steps + 1):
        tokens, targets, _ = next(batches)
        dec_in, dec_out = seq2seq_arrays(tokens, targets)

        def loss_fn():
            logits = model.forward(tokens, dec_in)
            return nn.cross_entropy(logits, dec_out, ignore_index=tasks.PAD)

        loss = train_step(model, opt, loss_fn)
        record = {"step": step, "train_loss": round(loss, 6)}
        if step % tc.eval_every == 0 or step == tc.steps:
            acc = eval_seq2seq_greedy(model, val_set, max_rows=16)
            record["val_token_acc"] = round(acc, 4)
            metrics.append(record)
            if (tc.target_accuracy is not None and acc >= tc.target_accuracy
                    and step >= tc.min_steps):
                break
        else:
            metrics.append(record)
    return metrics


def train_on_task(cfg: ModelConfig, spec: tasks.DatasetSpec, tc: TrainConfig,
                  val_fraction: float = 0.1, model_seed: int = 0):
    """Generate the dataset, split, build and train a model.

    Returns (model, train_set, val_set, metrics).
    """
    data = tasks.generate(spec)
    n_val = max(1, int(len(data) * val_fraction))
    val_set, train_set = data[:n_val], data[n_val:]
    model = build_model(cfg, seed=model_seed).astype(np.dtype(tc.dtype))
    if cfg.mode == "encoder-only":
        metrics = train_classifier(model, train_set, val_set, tc)
    else:
        metrics = train_seq2seq(model, train_set, val_set, tc)
    return model, train_set, val_set, metrics
