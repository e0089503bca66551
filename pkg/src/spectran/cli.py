"""Command-line entry point.

Subcommands: train, eval, bench, spectrum, sweep, dct. Option precedence is
config file < SPECTRAL_* environment variables < command-line flags. Every
run writes a manifest (config hash, seed, versions) to the output directory
before any other output, and holds a lock file so concurrent runs cannot
share a directory.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

ENV_PREFIX = "SPECTRAL_"


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectran",
        description="Spectral sequence-compression transformers: train, "
                    "evaluate, benchmark and inspect.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", default=None,
                       help="model config: preset name or JSON file path")
        p.add_argument("--seed", type=int, default=None)
        if needs_out:
            p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS/FFT thread cap (best effort)")

    p = sub.add_parser("train", help="fit a model, write checkpoint + metrics")
    common(p)
    p.add_argument("--task", default=None,
                   help="task kind (defaults to a task matching the config)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dataset-size", type=int, default=None)

    p = sub.add_parser("eval", help="accuracy/loss of a checkpoint on a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default=None)
    p.add_argument("--dataset-size", type=int, default=None)

    p = sub.add_parser("bench", help="wall-time scaling CSV, filtered vs vanilla")
    common(p)
    p.add_argument("--lengths", default=None,
                   help="comma-separated sequence lengths, e.g. 1024,4096")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)

    p = sub.add_parser("spectrum", help="per-layer hidden-state spectrum CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default=None)
    p.add_argument("--dataset-size", type=int, default=None)

    p = sub.add_parser("sweep", help="retention-ratio sweep CSV")
    common(p)
    p.add_argument("--ratios", default=None,
                   help="comma-separated retaining ratios, e.g. 0.1,0.3,1.0")
    p.add_argument("--task", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--dataset-size", type=int, default=None)

    p = sub.add_parser("dct", help="transform comma-separated sequences")
    p.add_argument("input", nargs="?", default="-",
                   help="input file, or - for standard input")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--ratio", type=float, default=None,
                   help="truncate to ceil(ratio*N) bins before writing")
    p.add_argument("--strategy", default="high-frequency-cut")
    p.add_argument("--output", default="-")
    return parser


def _resolve(flag_value, env_name, file_value, default):
    """file < environment < flag."""
    if flag_value is not None:
        return flag_value
    env = _env(env_name)
    if env is not None:
        return env
    if file_value is not None:
        return file_value
    return default


def _load_model_config(name_or_path):
    from .model import ModelConfig, presets
    if name_or_path is None:
        raise SystemExit("a --config preset name or path is required")
    table = presets()
    if name_or_path in table:
        return table[name_or_path], name_or_path
    return ModelConfig.load(name_or_path), Path(name_or_path).stem


DEFAULT_TASK_FOR_CONFIG = {
    "listops-mini": "listops-mini",
    "byte-classify": "byte-classify",
    "lra-text": "byte-classify",
    "seq2seq-copy": "seq2seq-copy",
}


class OutputDir:
    """Locked run directory; writes the manifest before any other output."""

    def __init__(self, path, payload: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.lock = self.path / ".lock"
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise SystemExit(
                f"output directory {self.path} is locked by another run")
        (self.path / "manifest.json").write_text(
            json.dumps(payload, indent=1, sort_keys=True) + "\n")

    def release(self):
        self.lock.unlink(missing_ok=True)


def _manifest(cfg, seed, extra=None) -> dict:
    import numpy
    from . import __version__
    payload = {
        "config": json.loads(cfg.to_json()),
        "config_hash": hashlib.sha256(cfg.to_json().encode()).hexdigest(),
        "seed": seed,
        "versions": {"spectran": __version__, "numpy": numpy.__version__,
                     "python": sys.version.split()[0]},
    }
    if extra:
        payload.update(extra)
    return payload


def _dataset_spec(task, seed, size, cfg):
    from .tasks import DatasetSpec
    if task == "listops-mini":
        return DatasetSpec(kind=task, size=size or 4000, seed=seed,
                           length=min(cfg.max_len, 256))
    if task == "byte-classify":
        return DatasetSpec(kind=task, size=size or 4000, seed=seed,
                           length=min(cfg.max_len, 512))
    if task == "seq2seq-copy":
        return DatasetSpec(kind=task, size=size or 2000, seed=seed, length=32)
    raise SystemExit(f"unknown task {task!r}")


def cmd_train(args) -> int:
    from . import nn, trainer
    cfg, cfg_name = _load_model_config(
        _resolve(args.config, "config", None, None))
    seed = int(_resolve(args.seed, "seed", None, 0))
    out = Path(_resolve(args.out, "out", None, f"runs/{cfg_name}"))
    task = _resolve(args.task, "task", DEFAULT_TASK_FOR_CONFIG.get(cfg_name),
                    None)
    steps = int(_resolve(args.steps, "steps", None, 300))
    batch = int(_resolve(args.batch_size, "batch_size", None, 16))
    lr = float(_resolve(args.lr, "lr", None, 1e-3))
    size = args.dataset_size
    spec = _dataset_spec(task, seed, size, cfg)
    run = OutputDir(out, _manifest(cfg, seed, {
        "command": "train", "task": task, "dataset_spec": json.loads(spec.to_json()),
        "steps": steps, "batch_size": batch, "lr": lr}))
    try:
        tc = trainer.TrainConfig(steps=steps, batch_size=batch, lr=lr,
                                 seed=seed)
        model_obj, _, _, metrics = trainer.train_on_task(cfg, spec, tc,
                                                         model_seed=seed)
        with (out / "metrics.jsonl").open("w") as fh:
            for row in metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        nn.save_checkpoint(out / "checkpoint", model_obj.named_parameters())
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    finally:
        run.release()
    return 0


def _load_trained(args, cfg, seed):
    from . import nn
    from .model import build_model
    model_obj = build_model(cfg, seed=seed)
    nn.load_checkpoint(args.checkpoint, model_obj.named_parameters())
    return model_obj


def cmd_eval(args) -> int:
    from . import tasks as tasks_mod, trainer
    cfg, cfg_name = _load_model_config(
        _resolve(args.config, "config", None, None))
    seed = int(_resolve(args.seed, "seed", None, 0))
    task = _resolve(args.task, "task", DEFAULT_TASK_FOR_CONFIG.get(cfg_name),
                    None)
    spec = _dataset_spec(task, seed + 1, args.dataset_size or 1000, cfg)
    model_obj = _load_trained(args, cfg, seed)
    data = tasks_mod.generate(spec)
    if cfg.mode == "encoder-only":
        acc, loss = trainer.eval_classifier(model_obj, data)
        report = {"accuracy": round(acc, 4), "loss": round(loss, 6)}
    else:
        acc = trainer.eval_seq2seq_greedy(model_obj, data)
        report = {"token_accuracy": round(acc, 4)}
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    from . import bench
    cfg, _ = _load_model_config(
        _resolve(args.config, "config", None, "lra-text"))
    seed = int(_resolve(args.seed, "seed", None, 0))
    out = Path(_resolve(args.out, "out", None, "runs/bench"))
    lengths = [int(x) for x in
               str(_resolve(args.lengths, "lengths", None, "1024,4096")).split(",")]
    batch = int(_resolve(args.batch_size, "batch_size", None, 16))
    repeats = int(_resolve(args.repeats, "repeats", None, 5))
    run = OutputDir(out, _manifest(cfg, seed, {
        "command": "bench", "lengths": lengths, "batch_size": batch,
        "repeats": repeats, "assumptions": bench.FLOPS_ASSUMPTIONS}))
    try:
        results = bench.bench_forward(cfg, lengths, batch, repeats, seed=seed)
        (out / "bench.csv").write_text(bench.results_to_csv(results))
        est = bench.flops_estimate(cfg, lengths[-1])
        (out / "flops.json").write_text(json.dumps(est, indent=1) + "\n")
    finally:
        run.release()
    return 0


def cmd_spectrum(args) -> int:
    from . import bench, tasks as tasks_mod
    cfg, cfg_name = _load_model_config(
        _resolve(args.config, "config", None, None))
    seed = int(_resolve(args.seed, "seed", None, 0))
    out = Path(_resolve(args.out, "out", None, "runs/spectrum"))
    task = _resolve(args.task, "task", DEFAULT_TASK_FOR_CONFIG.get(cfg_name),
                    None)
    spec = _dataset_spec(task, seed + 1, args.dataset_size or 1000, cfg)
    run = OutputDir(out, _manifest(cfg, seed, {"command": "spectrum",
                                               "task": task}))
    try:
        model_obj = _load_trained(args, cfg, seed)
        report = bench.spectrum_report(model_obj, tasks_mod.generate(spec))
        (out / "spectrum.csv").write_text(bench.spectrum_to_csv(report))
    finally:
        run.release()
    return 0


def cmd_sweep(args) -> int:
    from . import bench, trainer
    cfg, cfg_name = _load_model_config(
        _resolve(args.config, "config", None, "byte-classify"))
    seed = int(_resolve(args.seed, "seed", None, 0))
    out = Path(_resolve(args.out, "out", None, "runs/sweep"))
    task = _resolve(args.task, "task", DEFAULT_TASK_FOR_CONFIG.get(cfg_name),
                    None)
    ratios = [float(x) for x in
              str(_resolve(args.ratios, "ratios", None,
                           "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")).split(",")]
    steps = int(_resolve(args.steps, "steps", None, 200))
    spec = _dataset_spec(task, seed, args.dataset_size, cfg)
    run = OutputDir(out, _manifest(cfg, seed, {"command": "sweep",
                                               "ratios": ratios,
                                               "steps": steps}))
    try:
        tc = trainer.TrainConfig(steps=steps, seed=seed)
        rows = bench.retention_sweep(cfg, spec, ratios, tc)
        (out / "sweep.csv").write_text(bench.sweep_to_csv(rows))
    finally:
        run.release()
    return 0


def cmd_dct(args) -> int:
    import numpy as np
    from . import dct as dct_mod
    if args.strategy not in dct_mod.TRUNCATION_STRATEGIES:
        print(f"unknown strategy {args.strategy!r}", file=sys.stderr)
        return 1
    source = sys.stdin if args.input == "-" else open(args.input)
    sink = sys.stdout if args.output == "-" else open(args.output, "w")
    try:
        for line in source:
            line = line.strip()
            if not line:
                continue
            values = np.array([float(v) for v in line.split(",")])
            if args.inverse:
                out = dct_mod.idct_fft(values)
            else:
                out = dct_mod.dct_fft(values)
                if args.ratio is not None:
                    spec = dct_mod.SpectrumTensor(
                        out[None, :, None], source_length=out.size)
                    out = dct_mod.truncate_spectrum(
                        spec, args.ratio, args.strategy).coeffs[0, :, 0]
            sink.write(",".join(f"{v:.10g}" for v in out) + "\n")
    except ValueError as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return 1
    finally:
        if source is not sys.stdin:
            source.close()
        if sink is not sys.stdout:
            sink.close()
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "dct": cmd_dct,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    threads = getattr(args, "threads", None) or _env("threads")
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return exc.code or 0
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
