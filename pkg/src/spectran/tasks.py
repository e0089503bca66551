"""Deterministic desk-scale dataset generators.

Byte-level tokenization everywhere: ids 0..255 are raw bytes (shifted by 1
so 0 stays the pad token), ids above that are task specials. Identical
spec + seed always produces the identical dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

PAD = 0

# listops vocabulary
LISTOPS_TOKENS = ["<pad>"] + [str(d) for d in range(10)] + \
    ["[MAX", "[MIN", "[MED", "[SM", "]"]
LISTOPS_IDS = {t: i for i, t in enumerate(LISTOPS_TOKENS)}

# byte-classify specials: bytes occupy 1..256, sentinel payloads 257..264
BYTE_OFFSET = 1
SENTINEL_BASE = 257
SENTINEL_ALPHABET = 8
BYTE_VOCAB = SENTINEL_BASE + SENTINEL_ALPHABET  # 265

# copy task: PAD=0, BOS=1, EOS=2, payload symbols from 3
COPY_BOS = 1
COPY_EOS = 2
COPY_SYMBOL_BASE = 3


@dataclass(frozen=True)
class DatasetSpec:
    kind: str                  # listops-mini | byte-classify | seq2seq-copy
    size: int
    seed: int
    length: int = 512          # fixed sequence length (byte-classify, copy)
    max_depth: int = 3         # listops nesting bound
    max_args: int = 5
    copy_vocab: int = 16
    reverse: bool = False      # copy task: target is the reversed source

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class Example:
    tokens: list
    target: object             # class id, or token list for seq2seq
    length: int


# ---------------- listops ----------------

OPS = ("[MAX", "[MIN", "[MED", "[SM")


def eval_listops(node) -> int:
    """Exact recursive evaluator; node = digit or (op, [children])."""
    if isinstance(node, int):
        return node
    op, args = node
    vals = [eval_listops(a) for a in args]
    if op == "[MAX":
        return max(vals)
    if op == "[MIN":
        return min(vals)
    if op == "[MED":
        return int(np.median(vals))
    if op == "[SM":
        return sum(vals) % 10
    raise ValueError(f"unknown operator {op}")


def tokens_of_tree(node) -> list:
    if isinstance(node, int):
        return [str(node)]
    op, args = node
    out = [op]
    for a in args:
        out.extend(tokens_of_tree(a))
    out.append("]")
    return out


def _random_tree(rng, depth: int, max_args: int):
    if depth == 0 or rng.random() < 0.3:
        return int(rng.integers(0, 10))
    op = OPS[rng.integers(0, len(OPS))]
    n_args = int(rng.integers(2, max_args + 1))
    return (op, [_random_tree(rng, depth - 1, max_args) for _ in range(n_args)])


def gen_listops(spec: DatasetSpec) -> list[Example]:
    if spec.max_depth > 4:
        raise ValueError("desk scale caps nesting depth at 4")
    if spec.length > 512:
        raise ValueError("desk scale caps sequence length at 512")
    rng = np.random.default_rng(spec.seed)
    out = []
    while len(out) < spec.size:
        tree = _random_tree(rng, spec.max_depth, spec.max_args)
        if isinstance(tree, int):
            tree = (OPS[int(rng.integers(0, len(OPS)))],
                    [tree, int(rng.integers(0, 10))])
        toks = tokens_of_tree(tree)
        if len(toks) > spec.length:
            continue
        ids = [LISTOPS_IDS[t] for t in toks]
        out.append(Example(tokens=ids, target=eval_listops(tree),
                           length=len(ids)))
    return out


# ---------------- byte classification ----------------

def sentinel_run_length(n: int) -> int:
    """Length of each sentinel run; scales with the sequence length."""
    return max(1, n // 4)


def gen_byte_classify(spec: DatasetSpec) -> list[Example]:
    """Two balanced families separable only by matching distant sentinels.

    Each sequence is random bytes with a run of one sentinel byte in the
    first quarter and another run in the last quarter; the label says
    whether the two sentinel bytes match. Runs (rather than single tokens)
    keep the signal visible under mean pooling and low-pass filtering while
    the label still depends only on long-range structure: no single
    position's marginal distribution differs between the classes.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.length
    run = sentinel_run_length(n)
    out = []
    for _ in range(spec.size):
        seq = (rng.integers(0, 256, n) + BYTE_OFFSET).astype(np.int64)
        label = int(rng.random() < 0.5)
        a = int(rng.integers(0, SENTINEL_ALPHABET))
        if label:
            b = a
        else:
            b = int((a + 1 + rng.integers(0, SENTINEL_ALPHABET - 1))
                    % SENTINEL_ALPHABET)
        p1 = int(rng.integers(0, n // 4 - run + 1))
        p2 = int(rng.integers(3 * n // 4, n - run + 1))
        seq[p1: p1 + run] = SENTINEL_BASE + a
        seq[p2: p2 + run] = SENTINEL_BASE + b
        out.append(Example(tokens=seq.tolist(), target=label, length=n))
    return out


# ---------------- copy task ----------------

def gen_copy_task(spec: DatasetSpec) -> list[Example]:
    if spec.length > 256:
        raise ValueError("desk scale caps copy source length at 256")
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.size):
        src = (rng.integers(0, spec.copy_vocab, spec.length)
               + COPY_SYMBOL_BASE).tolist()
        tgt = list(reversed(src)) if spec.reverse else list(src)
        out.append(Example(tokens=src, target=tgt, length=spec.length))
    return out


GENERATORS = {
    "listops-mini": gen_listops,
    "byte-classify": gen_byte_classify,
    "seq2seq-copy": gen_copy_task,
}


def generate(spec: DatasetSpec) -> list[Example]:
    if spec.kind not in GENERATORS:
        raise ValueError(f"unknown task kind {spec.kind!r}")
    return GENERATORS[spec.kind](spec)


def vocab_size(kind: str) -> int:
    if kind == "listops-mini":
        return len(LISTOPS_TOKENS)
    if kind == "byte-classify":
        return BYTE_VOCAB
    if kind == "seq2seq-copy":
        return COPY_SYMBOL_BASE + 21  # headroom for symbols beyond default 16
    raise ValueError(f"unknown task kind {kind!r}")


# ---------------- persistence ----------------

def save_jsonl(path, examples: list[Example], spec: DatasetSpec):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for ex in examples:
            fh.write(json.dumps({"tokens": ex.tokens, "target": ex.target}) + "\n")
    manifest = path.with_suffix(".manifest.json")
    manifest.write_text(spec.to_json() + "\n")


def load_jsonl(path) -> list[Example]:
    out = []
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        out.append(Example(tokens=d["tokens"], target=d["target"],
                           length=len(d["tokens"])))
    return out


# ---------------- batching ----------------

def batch_iter(examples: list[Example], batch_size: int, pad_token: int = PAD,
               seed: int = 0, shuffle: bool = True):
    """Yield (tokens [B, N], targets, lengths [B]) with right padding.

    All sequences in one dataset are padded to the dataset-wide maximum
    length, so every batch has the same width. Deterministic per seed.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not examples:
        raise ValueError("empty dataset")
    order = np.arange(len(examples))
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    width = max(ex.length for ex in examples)
    for lo in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[lo: lo + batch_size]]
        tokens = np.full((len(chunk), width), pad_token, dtype=np.int64)
        lengths = np.zeros(len(chunk), dtype=np.int64)
        for i, ex in enumerate(chunk):
            tokens[i, : ex.length] = ex.tokens
            lengths[i] = ex.length
        if isinstance(chunk[0].target, list):
            t_width = max(len(ex.target) for ex in chunk)
            targets = np.full((len(chunk), t_width), pad_token, dtype=np.int64)
            for i, ex in enumerate(chunk):
                targets[i, : len(ex.target)] = ex.target
        else:
            targets = np.array([ex.target for ex in chunk], dtype=np.int64)
        yield tokens, targets, lengths
