"""Command-line workbench.

Subcommands: parse, ingest, gaze, synth-gaze, dataset, train, eval,
attnmap, gradcheck. Every command is deterministic given its inputs and
seeds; outputs carry format_version fields and are written atomically.
``EYETRANS_THREADS`` controls grid-cell parallelism in ``train``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .ast_core import export_ast, ingest_ast
from .dataset import (DatasetRow, MethodRecord, atomic_write_text,
                      build_dataset, builtin_corpus, builtin_sources,
                      read_rows_jsonl, synthesize_trials, write_bundle)
from .errors import EyeTransError


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except EyeTransError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eyetrans",
        description="Gaze-guided Transformer embeddings for code summarization")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("parse", help="parse a Java method into an AST document")
    p.add_argument("source", help="path to a .java file ('-' for stdin)")
    p.add_argument("--method-id", default=None)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("ingest", help="validate an AST document and re-export it")
    p.add_argument("document", help="path to an AST document JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gaze", help="turn a gaze CSV into fixations and switches")
    p.add_argument("--source", required=True, help="the .java file shown on screen")
    p.add_argument("--gaze", required=True, help="CSV with t_ms,x_px,y_px,valid")
    p.add_argument("--char-w", type=float, default=10.0)
    p.add_argument("--char-h", type=float, default=20.0)
    p.add_argument("--origin-x", type=float, default=0.0)
    p.add_argument("--origin-y", type=float, default=0.0)
    p.add_argument("--threshold", type=float, default=400.0,
                   help="saccade velocity threshold in px per 100 ms")
    p.add_argument("--min-fixation", type=float, default=100.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gaze)

    p = sub.add_parser("synth-gaze", help="synthesize attention switches for a method")
    p.add_argument("--source", help="path to a .java file")
    p.add_argument("--ast", help="path to an AST document JSON")
    p.add_argument("--mode", choices=("markov", "planted"), default="markov")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-fixations", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_synth_gaze)

    p = sub.add_parser("dataset", help="assemble train/test JSONL files")
    p.add_argument("--corpus", default="builtin",
                   help="'builtin' or a corpus JSON path")
    p.add_argument("--tier", choices=("original", "filtered", "strict"),
                   default="original")
    p.add_argument("--augment-k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--participants", type=int, default=5,
                   help="synthetic participants per method")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="run the (tier x grid x seed) experiment matrix")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--grid", default="0,0", help="cells 'R0,N0;R1,N1;...'")
    p.add_argument("--apply-at", choices=("train", "eval", "both"), default="both")
    p.add_argument("--baseline", action="store_true",
                   help="strip switches at evaluation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attnmap", help="export first-block attention heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="dataset dir or rows JSONL")
    p.add_argument("--row-id", default=None)
    p.add_argument("--row-index", type=int, default=0)
    p.add_argument("--baseline-checkpoint", default=None,
                   help="paired run: also emit difference and entropy maps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attnmap)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the full models")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _read_source(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_parse(args) -> int:
    from .parser import parse_java_subset

    source = _read_source(args.source)
    method_id = args.method_id or os.path.splitext(os.path.basename(args.source))[0]
    ast = parse_java_subset(source, method_id=method_id)
    _emit(export_ast(ast), args.out)
    return 0


def cmd_ingest(args) -> int:
    with open(args.document) as fh:
        ast = ingest_ast(json.load(fh))
    _emit(export_ast(ast), args.out)
    return 0


def cmd_gaze(args) -> int:
    from .gaze import classify_ivt, extract_switches, map_fixations, read_gaze_csv
    from .parser import parse_with_layout
    from .gaze import spans_to_boxes

    source = _read_source(args.source)
    _, spans = parse_with_layout(source)
    boxes = spans_to_boxes(spans, args.char_w, args.char_h,
                           (args.origin_x, args.origin_y))
    samples = read_gaze_csv(args.gaze)
    fixations = map_fixations(
        classify_ivt(samples, args.threshold, args.min_fixation), boxes)
    switches = extract_switches(fixations)
    _emit({
        "format_version": 1,
        "n_samples": len(samples),
        "fixations": [{"x": f.x, "y": f.y, "start": f.start, "end": f.end,
                       "node_id": f.node_id} for f in fixations],
        "switches": [[s.ordinal, s.src, s.dst] for s in switches],
    }, args.out)
    return 0


def cmd_synth_gaze(args) -> int:
    from .gaze import synthesize_gaze
    from .parser import parse_java_subset

    if bool(args.source) == bool(args.ast):
        print("error: give exactly one of --source / --ast", file=sys.stderr)
        return 2
    if args.source:
        ast = parse_java_subset(_read_source(args.source))
    else:
        with open(args.ast) as fh:
            ast = ingest_ast(json.load(fh))
    if args.mode == "planted":
        print("error: planted mode is only meaningful through the planted "
              "task constructor", file=sys.stderr)
        return 2
    switches = synthesize_gaze(ast, mode=args.mode, seed=args.seed,
                               n_fixations=args.n_fixations)
    _emit({"format_version": 1, "method_id": ast.method_id,
           "switches": [[s.ordinal, s.src, s.dst] for s in switches]}, args.out)
    return 0


def cmd_dataset(args) -> int:
    if args.corpus == "builtin":
        methods = builtin_corpus()
    else:
        from .parser import parse_java_subset

        with open(args.corpus) as fh:
            blob = json.load(fh)
        methods = []
        for rec in blob["methods"]:
            ast = parse_java_subset(rec["source"], method_id=rec["method_id"])
            ast.label_class = rec.get("label_class")
            ast.summary_text = rec.get("summary")
            methods.append(ast)
    records = synthesize_trials(methods, participants=args.participants,
                                seed=args.seed)
    bundle = build_dataset(records, tier=args.tier, augment_k=args.augment_k,
                           seed=args.seed)
    paths = write_bundle(bundle, args.out)
    print(json.dumps({"written": paths, "counts": bundle.manifest["counts"]},
                     sort_keys=True, indent=2))
    return 0


def cmd_train(args) -> int:
    from .runner import load_experiment_config, run_experiment

    exp = load_experiment_config(args.config)
    run_experiment(exp)
    print(f"summary: {os.path.join(exp.out_dir, 'summary.csv')}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_model
    from .metrics import classification_report, mean_rouge, rouge_report
    from .models import PerturbConfig, TrainConfig, evaluate, make_batch
    from .runner import load_dataset_dir

    model, _, meta = load_model(args.checkpoint)
    data = load_dataset_dir(args.dataset)
    cells = _parse_grid(args.grid)
    report: dict = {"format_version": 1, "checkpoint": args.checkpoint,
                    "cells": []}
    for r, n in cells:
        perturb = PerturbConfig(R=r, N=n, apply_at=args.apply_at)
        tc = TrainConfig(seed=args.seed, baseline_mode=args.baseline)
        metrics = evaluate(model, data.test, perturb, train_cfg=tc)
        cell_report = {"R": r, "N": n, "metrics": metrics}
        if model.kind == "functional":
            batch = make_batch(data.test, model.cfg.s_max, args.baseline)
            preds = model.predict(batch)
            cr = classification_report(preds.tolist(),
                                       [row.label_class for row in data.test])
            cell_report["per_class"] = {
                str(c): {"precision": v.precision, "recall": v.recall, "f1": v.f1}
                for c, v in cr.per_class.items()}
        else:
            batch = make_batch(data.test, model.cfg.s_max, args.baseline,
                               need_labels=False, need_summary=True)
            decoded = model.greedy_decode(batch)
            reports = [rouge_report(d, row.summary or [])
                       for d, row in zip(decoded, data.test)]
            cell_report["per_sample"] = [
                {"id": row.id, **rep.as_dict()}
                for row, rep in zip(data.test, reports)]
            cell_report["mean"] = mean_rouge(reports).as_dict()
        report["cells"].append(cell_report)
    _emit(report, args.out)
    return 0


def cmd_attnmap(args) -> int:
    from .attnmap import export_attention_dump, export_comparison, extract_attention
    from .checkpoint import load_model

    if os.path.isdir(args.dataset):
        rows = read_rows_jsonl(os.path.join(args.dataset, "test.jsonl"))
    else:
        rows = read_rows_jsonl(args.dataset)
    if args.row_id is not None:
        matching = [r for r in rows if r.id == args.row_id]
        if not matching:
            print(f"error: no row with id {args.row_id!r}", file=sys.stderr)
            return 1
        row = matching[0]
    else:
        row = rows[args.row_index]
    model, _, _ = load_model(args.checkpoint)
    dump = extract_attention(model, row)
    written = export_attention_dump(dump, args.out)
    if args.baseline_checkpoint:
        base_model, _, _ = load_model(args.baseline_checkpoint)
        base_row = DatasetRow(id=row.id, tokens=row.tokens, heights=row.heights,
                              switches=[], label_class=row.label_class,
                              summary=row.summary, tiers=row.tiers)
        base_dump = extract_attention(base_model, base_row)
        written += export_comparison(dump, base_dump, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(eps=args.eps)
    worst = 0.0
    for kind, rep in report.items():
        status = "pass" if rep.max_rel_error <= args.tolerance else "FAIL"
        print(f"{kind}: max_rel_error={rep.max_rel_error:.3e} "
              f"checked={rep.n_checked} kinks_skipped={rep.n_skipped_kinks} "
              f"worst={rep.worst_param} [{status}]")
        worst = max(worst, rep.max_rel_error)
    return 0 if worst <= args.tolerance else 1


def run_gradcheck(eps: float = 1e-5, d: int = 8, n_layers: int = 2,
                  n_tokens: int = 6, n_switches: int = 2,
                  max_coords_per_param: int = 6) -> dict:
    """Finite-difference check of both full models at toy size, float64."""
    from .embedding import FusionConfig
    from .models import FunctionalModel, Seq2SeqModel, make_batch
    from .nn import ModelConfig, grad_check
    from .tensor import Tape, Tensor  # noqa: F401 (docs)

    rows = _gradcheck_rows(n_tokens, n_switches)
    out: dict = {}

    cfg = ModelConfig(d=d, n_heads=2, n_encoder_layers=n_layers,
                      n_decoder_layers=0, n_classes=3, vocab_size=12,
                      s_max=8)
    model = FunctionalModel(cfg, FusionConfig(), seed=3, dtype=np.float64)
    batch = make_batch(rows, cfg.s_max, baseline_mode=False, dtype=np.float64)
    out["functional"] = grad_check(lambda: model.loss(batch), model.params(),
                                   eps=eps,
                                   max_coords_per_param=max_coords_per_param,
                                   seed=11)

    cfg2 = ModelConfig(d=d, n_heads=2, n_encoder_layers=n_layers,
                       n_decoder_layers=n_layers, n_classes=3, vocab_size=12,
                       s_max=8, max_summary_len=6)
    model2 = Seq2SeqModel(cfg2, FusionConfig(), seed=5, dtype=np.float64)
    batch2 = make_batch(rows, cfg2.s_max, baseline_mode=False,
                        max_summary_len=cfg2.max_summary_len,
                        dtype=np.float64, need_labels=False, need_summary=True)
    out["seq2seq"] = grad_check(lambda: model2.loss(batch2), model2.params(),
                                eps=eps,
                                max_coords_per_param=max_coords_per_param,
                                seed=13)
    return out


def _gradcheck_rows(n_tokens: int, n_switches: int) -> list:
    switches = [[k + 1, k % n_tokens, (k + 2) % n_tokens]
                for k in range(n_switches)]
    return [
        DatasetRow(id="gc0", tokens=list(range(n_tokens)),
                   heights=[min(i, 3) for i in range(n_tokens)],
                   switches=switches, label_class=1,
                   summary=[4, 5, 6]),
        DatasetRow(id="gc1", tokens=list(reversed(range(n_tokens))),
                   heights=[0] * n_tokens, switches=[[1, 1, 0]],
                   label_class=2, summary=[7, 8]),
    ]


def _parse_grid(text: str) -> list[tuple[float, float]]:
    cells = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        r, n = part.split(",")
        cells.append((float(r), float(n)))
    return cells


if __name__ == "__main__":
    sys.exit(main())
