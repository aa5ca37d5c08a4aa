"""Experiment orchestration over (tier x grid cell x seed x variant).

Each cell runs the switch-aware model ("eyetrans") and optionally the
switch-stripped baseline, five seeds apiece by default, then reports
per-seed rows, the 5-seed mean, and the percent improvement of the
paired variants. Cells are independent; ``EYETRANS_THREADS`` > 1 runs
them on a thread pool with disjoint output paths.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dataset import (DatasetRow, Vocabulary, atomic_write_text,
                      read_rows_jsonl)
from .embedding import ablate
from .errors import ConfigError, MissingDataset
from .models import (PAPER_SEEDS, PerturbConfig, TrainConfig, evaluate, train)
from .nn import ModelConfig

RUNNER_FORMAT_VERSION = 1

FUNCTIONAL_METRICS = ("accuracy", "maf1", "map", "mar")
SEQ2SEQ_METRICS = ("rouge1", "rouge2", "rougeS", "rougeSU", "rougeL")


@dataclass
class ExperimentConfig:
    task: str  # functional | seq2seq
    datasets: dict[str, str]  # tier -> dataset directory
    out_dir: str
    seeds: tuple[int, ...] = PAPER_SEEDS
    grid: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 256
    apply_at: str = "both"
    variants: tuple[str, ...] = ("eyetrans", "baseline")
    fusion_variant: str = "default"
    d: int = 32
    n_heads: int = 4
    n_encoder_layers: int = 4
    n_decoder_layers: int = 4
    save_checkpoints: bool = True

    @classmethod
    def from_json(cls, blob: dict) -> "ExperimentConfig":
        if "task" not in blob:
            raise ConfigError("task", "missing (functional | seq2seq)")
        if blob["task"] not in ("functional", "seq2seq"):
            raise ConfigError("task", f"unknown task {blob['task']!r}")
        if "datasets" not in blob or not isinstance(blob["datasets"], dict):
            raise ConfigError("datasets", "missing tier -> directory map")
        if "out_dir" not in blob:
            raise ConfigError("out_dir", "missing output directory")
        known = set(cls.__dataclass_fields__)
        cfg_kwargs = {}
        for key, value in blob.items():
            if key == "format_version":
                continue
            if key not in known:
                raise ConfigError(key, "unknown key")
            cfg_kwargs[key] = value
        cfg_kwargs["seeds"] = tuple(cfg_kwargs.get("seeds", PAPER_SEEDS))
        cfg_kwargs["grid"] = tuple(
            (float(r), float(n)) for r, n in cfg_kwargs.get("grid", ((0.0, 0.0),)))
        cfg_kwargs["variants"] = tuple(cfg_kwargs.get("variants",
                                                      ("eyetrans", "baseline")))
        for v in cfg_kwargs["variants"]:
            if v not in ("eyetrans", "baseline"):
                raise ConfigError("variants", f"unknown variant {v!r}")
        return cls(**cfg_kwargs)


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_json(json.load(fh))


@dataclass
class LoadedDataset:
    train: list[DatasetRow]
    test: list[DatasetRow]
    vocab: Vocabulary
    manifest: dict


def load_dataset_dir(path: str) -> LoadedDataset:
    for fname in ("train.jsonl", "test.jsonl", "vocab.json", "manifest.json"):
        if not os.path.exists(os.path.join(path, fname)):
            raise MissingDataset(f"{path}: missing {fname}")
    with open(os.path.join(path, "vocab.json")) as fh:
        vocab = Vocabulary.from_json(json.load(fh))
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    return LoadedDataset(read_rows_jsonl(os.path.join(path, "train.jsonl")),
                         read_rows_jsonl(os.path.join(path, "test.jsonl")),
                         vocab, manifest)


def model_config_for(exp: ExperimentConfig, data: LoadedDataset) -> ModelConfig:
    return ModelConfig(
        d=exp.d, n_heads=exp.n_heads,
        n_encoder_layers=exp.n_encoder_layers,
        n_decoder_layers=exp.n_decoder_layers if exp.task == "seq2seq" else 0,
        n_classes=max(data.manifest.get("n_classes", 1), 1),
        vocab_size=len(data.vocab),
    )


@dataclass
class RunResult:
    tier: str
    variant: str
    R: float
    N: float
    seed: int
    final_metrics: dict[str, float]
    log_rows: list[dict] = field(default_factory=list)


def run_single(exp: ExperimentConfig, data: LoadedDataset, tier: str,
               cell: tuple[float, float], seed: int, variant: str) -> RunResult:
    r, n = cell
    cfg = model_config_for(exp, data)
    train_cfg = TrainConfig(epochs=exp.epochs, lr=exp.lr,
                            batch_size=exp.batch_size, seed=seed, tier=tier,
                            baseline_mode=(variant == "baseline"))
    perturb = PerturbConfig(R=r, N=n, apply_at=exp.apply_at)
    result = train(exp.task, data.train, data.test, cfg, train_cfg, perturb,
                   fusion=ablate(exp.fusion_variant))
    log_rows = []
    for log in result.logs:
        row = {"epoch": log.epoch, "seed": seed, "tier": tier, "R": r, "N": n,
               "loss": log.train_loss}
        row.update(log.metrics)
        log_rows.append(row)
    run = RunResult(tier, variant, r, n, seed,
                    result.logs[-1].metrics if result.logs else {}, log_rows)
    out_dir = run_dir(exp.out_dir, tier, variant, r, n, seed)
    os.makedirs(out_dir, exist_ok=True)
    metric_names = FUNCTIONAL_METRICS if exp.task == "functional" else SEQ2SEQ_METRICS
    write_log_csv(os.path.join(out_dir, "log.csv"), log_rows, metric_names)
    if exp.save_checkpoints:
        from .checkpoint import save_model

        save_model(os.path.join(out_dir, "model.eytr"), result.model,
                   result.optimizer, seed=seed, epoch=exp.epochs,
                   extra_meta={"tier": tier, "variant": variant, "R": r, "N": n})
    return run


def run_dir(out_root: str, tier: str, variant: str, r: float, n: float,
            seed: int) -> str:
    return os.path.join(out_root, tier, f"{variant}_R{r:g}_N{n:g}_seed{seed}")


def write_log_csv(path: str, rows: list[dict], metric_names) -> None:
    header = ["epoch", "seed", "tier", "R", "N", "loss", *metric_names]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(k, "")) for k in header))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def run_experiment(exp: ExperimentConfig) -> list[RunResult]:
    """Execute the full matrix and write per-run logs plus summary.csv."""
    datasets = {tier: load_dataset_dir(path) for tier, path in exp.datasets.items()}
    cells = [(tier, cell, seed, variant)
             for tier in exp.datasets
             for cell in exp.grid
             for variant in exp.variants
             for seed in exp.seeds]
    workers = max(1, int(os.environ.get("EYETRANS_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda args: run_single(exp, datasets[args[0]], *args), cells))
    else:
        results = [run_single(exp, datasets[tier], tier, cell, seed, variant)
                   for tier, cell, seed, variant in cells]
    write_summary(exp, results)
    return results


def summarize(results: list[RunResult], metric_names) -> list[dict]:
    """Per-seed rows, per-cell means, and eyetrans-vs-baseline improvement."""
    rows = []
    cells = sorted({(r.tier, r.R, r.N) for r in results},
                   key=lambda c: (c[0], c[1], c[2]))
    for tier, r_val, n_val in cells:
        cell_rows = [r for r in results
                     if (r.tier, r.R, r.N) == (tier, r_val, n_val)]
        means: dict[str, dict[str, float]] = {}
        for variant in ("eyetrans", "baseline"):
            variant_rows = sorted([r for r in cell_rows if r.variant == variant],
                                  key=lambda r: r.seed)
            if not variant_rows:
                continue
            for run in variant_rows:
                row = {"tier": tier, "variant": variant, "R": r_val, "N": n_val,
                       "seed": run.seed}
                row.update({m: run.final_metrics.get(m) for m in metric_names})
                rows.append(row)
            mean = {m: sum(r.final_metrics.get(m, 0.0) for r in variant_rows)
                       / len(variant_rows) for m in metric_names}
            means[variant] = mean
            row = {"tier": tier, "variant": variant, "R": r_val, "N": n_val,
                   "seed": "mean"}
            row.update(mean)
            rows.append(row)
        if "eyetrans" in means and "baseline" in means:
            imp = {}
            for m in metric_names:
                base = means["baseline"][m]
                imp[m] = ((means["eyetrans"][m] - base) / base * 100.0
                          if base else float("inf") if means["eyetrans"][m] else 0.0)
            row = {"tier": tier, "variant": "improvement_pct", "R": r_val,
                   "N": n_val, "seed": ""}
            row.update(imp)
            rows.append(row)
    return rows


def write_summary(exp: ExperimentConfig, results: list[RunResult]) -> str:
    metric_names = FUNCTIONAL_METRICS if exp.task == "functional" else SEQ2SEQ_METRICS
    rows = summarize(results, metric_names)
    header = ["tier", "variant", "R", "N", "seed", *metric_names]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(k, "")) for k in header))
    path = os.path.join(exp.out_dir, "summary.csv")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path
