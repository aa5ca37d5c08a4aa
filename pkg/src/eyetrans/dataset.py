"""Dataset assembly and persistence.

A :class:`DatasetRow` is the model-facing serialization of one (AST,
gaze) combination: BFS category ids, heights, switch triples indexed
into the BFS sequence, and the task label. Assembly runs tier filtering,
subtree-permutation augmentation, global deduplication, summary
paraphrasing for augmented variants, vocabulary construction, and the
80/20 split (seed 42 by default).

Files are JSONL with a single header record carrying ``format_version``;
writes are atomic (temp file + rename) and contain no timestamps, so
identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .ast_core import Ast, bfs_serialize
from .augment import AugmentedSample, augment_dataset
from .categories import category_id
from .errors import EmptyTier, ValidationError
from .gaze import AttentionSwitch, TIERS, Trial, synthesize_gaze, tier_accepts

DATASET_FORMAT_VERSION = 1
DEFAULT_SPLIT_SEED = 42
DEFAULT_TEST_FRACTION = 0.2

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


@dataclass
class DatasetRow:
    id: str
    tokens: list[int]  # category ids, BFS order
    heights: list[int]
    switches: list[list[int]]  # [ordinal, src_index, dst_index]
    label_class: int | None = None
    summary: list[int] | None = None  # vocabulary ids
    tiers: list[str] = field(default_factory=lambda: ["original"])

    def to_json(self) -> dict:
        out = {"id": self.id, "tokens": self.tokens, "heights": self.heights,
               "switches": self.switches, "tiers": self.tiers}
        if self.label_class is not None:
            out["label_class"] = self.label_class
        if self.summary is not None:
            out["summary"] = self.summary
        return out

    @classmethod
    def from_json(cls, rec: dict) -> "DatasetRow":
        n = len(rec["tokens"])
        if len(rec["heights"]) != n:
            raise ValidationError(f"row {rec.get('id')}: parallel lists differ in length")
        ordinals = [s[0] for s in rec["switches"]]
        if ordinals != list(range(1, len(ordinals) + 1)):
            raise ValidationError(f"row {rec.get('id')}: switch ordinals not 1..K")
        for _, src, dst in rec["switches"]:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValidationError(f"row {rec.get('id')}: switch index out of range")
        return cls(id=rec["id"], tokens=list(rec["tokens"]),
                   heights=list(rec["heights"]),
                   switches=[list(s) for s in rec["switches"]],
                   label_class=rec.get("label_class"),
                   summary=list(rec["summary"]) if "summary" in rec else None,
                   tiers=list(rec.get("tiers", ["original"])))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write_bytes(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_rows_jsonl(path: str, rows: list[DatasetRow]) -> None:
    header = {"format_version": DATASET_FORMAT_VERSION, "kind": "eyetrans-dataset",
              "n_rows": len(rows)}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r.to_json(), sort_keys=True) for r in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_rows_jsonl(path: str) -> list[DatasetRow]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "eyetrans-dataset":
            raise ValidationError(f"{path}: not a dataset file")
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported format_version")
        return [DatasetRow.from_json(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"[a-z0-9]+")


def tokenize_summary(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Closed comment vocabulary: specials + frequency-capped word list."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, summaries: list[list[str]], max_size: int = 2000) -> "Vocabulary":
        counts = Counter(tok for summary in summaries for tok in summary)
        # most frequent first, alphabetical tie-break: deterministic
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        body = [tok for tok, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
        return cls(list(SPECIAL_TOKENS) + body)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: list[str]) -> list[int]:
        return [self.index.get(w, UNK_ID) for w in words]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] if 0 <= i < len(self.tokens) else "<unk>" for i in ids]

    def to_json(self) -> dict:
        return {"format_version": DATASET_FORMAT_VERSION, "kind": "eyetrans-vocab",
                "tokens": self.tokens}

    @classmethod
    def from_json(cls, rec: dict) -> "Vocabulary":
        if rec.get("kind") != "eyetrans-vocab":
            raise ValidationError("not a vocabulary record")
        return cls(rec["tokens"])


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def switches_as_triples(ast: Ast, switches: list[AttentionSwitch]) -> list[list[int]]:
    seq = bfs_serialize(ast)
    pos = {nid: i for i, nid in enumerate(seq.node_ids)}
    return [[sw.ordinal, pos[sw.src], pos[sw.dst]] for sw in switches]


def row_from_sample(sample_id: str, ast: Ast, switches: list[AttentionSwitch],
                    tiers: list[str], summary_ids: list[int] | None = None) -> DatasetRow:
    seq = bfs_serialize(ast)
    return DatasetRow(id=sample_id, tokens=list(seq.categories),
                      heights=list(seq.heights),
                      switches=switches_as_triples(ast, switches),
                      label_class=ast.label_class, summary=summary_ids,
                      tiers=list(tiers))


def split_rows(rows: list[DatasetRow], test_fraction: float = DEFAULT_TEST_FRACTION,
               seed: int = DEFAULT_SPLIT_SEED,
               stratify_by_label: bool = False) -> tuple[list[DatasetRow], list[DatasetRow]]:
    """Shuffled train/test split; optionally stratified per class."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x5B1))))
    if not stratify_by_label:
        order = rng.permutation(len(rows))
        n_test = int(round(len(rows) * test_fraction))
        test_idx = set(order[:n_test].tolist())
        train = [r for i, r in enumerate(rows) if i not in test_idx]
        test = [r for i, r in enumerate(rows) if i in test_idx]
        return train, test
    by_label: dict[int, list[int]] = {}
    for i, r in enumerate(rows):
        by_label.setdefault(r.label_class, []).append(i)
    test_idx = set()
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        order = rng.permutation(len(idx))
        n_test = int(round(len(idx) * test_fraction))
        test_idx.update(idx[order[:n_test]].tolist())
    train = [r for i, r in enumerate(rows) if i not in test_idx]
    test = [r for i, r in enumerate(rows) if i in test_idx]
    return train, test


@dataclass
class MethodRecord:
    """One corpus method: its Ast plus the trials recorded on it."""

    ast: Ast
    trials: list[Trial] = field(default_factory=list)


@dataclass
class DatasetBundle:
    train: list[DatasetRow]
    test: list[DatasetRow]
    vocab: Vocabulary
    manifest: dict


def build_dataset(methods: list[MethodRecord], tier: str = "original",
                  augment_k: int = 3, seed: int = 0,
                  split_seed: int = DEFAULT_SPLIT_SEED,
                  test_fraction: float = DEFAULT_TEST_FRACTION,
                  vocab_size: int = 2000) -> DatasetBundle:
    """Full assembly: tiering, augmentation, dedup, vocab, split."""
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")

    bases: list[AugmentedSample] = []
    base_meta: dict[str, tuple[list[str], str]] = {}  # base key -> (tiers, summary)
    for method in methods:
        for trial in method.trials:
            tiers = [t for t in TIERS if tier_accepts(trial.rating, t)]
            key = f"{method.ast.method_id}:{trial.participant_id}"
            bases.append(AugmentedSample(
                base_method_id=key, variant_index=0, ast=method.ast,
                switches=list(trial.switches), provenance_seed=seed))
            base_meta[key] = (tiers, method.ast.summary_text or "")

    augmented = augment_dataset(bases, augment_k, seed)

    # paraphrase summaries of augmented variants so they are not verbatim
    # copies of the base comment
    summaries: list[list[str]] = []
    for sample in augmented:
        base_tiers, summary_text = base_meta[sample.base_method_id]
        words = tokenize_summary(summary_text)
        if sample.variant_index > 0 and words:
            words = _paraphrase(words, sample.provenance_seed)
        summaries.append(words)

    vocab = Vocabulary.build(summaries, max_size=vocab_size)

    # global dedup across bases: identical (category sequence, switch set)
    # combinations are one sample; tier flags merge
    rows: list[DatasetRow] = []
    seen: dict[tuple, int] = {}
    for sample, words in zip(augmented, summaries):
        base_tiers, _ = base_meta[sample.base_method_id]
        row = row_from_sample(
            f"{sample.base_method_id}:v{sample.variant_index}", sample.ast,
            sample.switches, base_tiers, vocab.encode(words))
        key = (tuple(row.tokens), frozenset(tuple(s) for s in row.switches))
        if key in seen:
            kept = rows[seen[key]]
            kept.tiers = sorted(set(kept.tiers) | set(row.tiers),
                                key=TIERS.index)
            continue
        seen[key] = len(rows)
        rows.append(row)

    selected = [r for r in rows if tier in r.tiers]
    if not selected:
        raise EmptyTier(f"tier {tier!r} matched no samples")
    train, test = split_rows(selected, test_fraction, split_seed)

    labels = {r.label_class for r in selected if r.label_class is not None}
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "kind": "eyetrans-manifest",
        "tier": tier,
        "counts": {t: sum(1 for r in rows if t in r.tiers) for t in TIERS},
        "n_train": len(train),
        "n_test": len(test),
        "n_classes": (max(labels) + 1) if labels else 0,
        "vocab_size": len(vocab),
        "augment_k": augment_k,
        "seed": seed,
        "split_seed": split_seed,
    }
    return DatasetBundle(train, test, vocab, manifest)


def _paraphrase(words: list[str], seed: int) -> list[str]:
    from .models import label_paraphrase

    return label_paraphrase(words, seed)


def write_bundle(bundle: DatasetBundle, out_dir: str) -> dict[str, str]:
    paths = {
        "train": os.path.join(out_dir, "train.jsonl"),
        "test": os.path.join(out_dir, "test.jsonl"),
        "vocab": os.path.join(out_dir, "vocab.json"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    write_rows_jsonl(paths["train"], bundle.train)
    write_rows_jsonl(paths["test"], bundle.test)
    atomic_write_text(paths["vocab"], json.dumps(bundle.vocab.to_json(), sort_keys=True) + "\n")
    atomic_write_text(paths["manifest"], json.dumps(bundle.manifest, sort_keys=True, indent=2) + "\n")
    return paths


# ---------------------------------------------------------------------------
# bundled micro-corpus + synthetic trials
# ---------------------------------------------------------------------------

def builtin_corpus() -> list[Ast]:
    """Parse the bundled Java micro-corpus into labeled Asts."""
    from importlib.resources import files

    from .parser import parse_java_subset

    blob = json.loads(files("eyetrans.corpus").joinpath("micro_corpus.json").read_text())
    methods = []
    for rec in blob["methods"]:
        ast = parse_java_subset(rec["source"], method_id=rec["method_id"])
        ast.label_class = rec["label_class"]
        ast.summary_text = rec["summary"]
        methods.append(ast)
    return methods


def builtin_sources() -> dict[str, str]:
    from importlib.resources import files

    blob = json.loads(files("eyetrans.corpus").joinpath("micro_corpus.json").read_text())
    return {rec["method_id"]: rec["source"] for rec in blob["methods"]}


def synthesize_trials(methods: list[Ast], participants: int = 5, seed: int = 0,
                      n_fixations: int = 20) -> list[MethodRecord]:
    """Markov-prior synthetic gaze for every (participant, method) pair.

    Ratings are drawn seeded and skewed toward usable summaries so every
    quality tier keeps a nontrivial subset.
    """
    from .gaze import QualityRating

    records = []
    for m_idx, ast in enumerate(methods):
        record = MethodRecord(ast=ast)
        for p in range(participants):
            sub_seed = int(np.random.SeedSequence((seed, m_idx, p)).generate_state(1)[0]
                           & 0x7FFFFFFF)
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence((seed, m_idx, p, 0x9))))
            switches = synthesize_gaze(ast, mode="markov", seed=sub_seed,
                                       n_fixations=n_fixations)
            rating = QualityRating(
                a=int(rng.choice([2, 3, 4, 5], p=[0.1, 0.2, 0.35, 0.35])),
                b=int(rng.choice([1, 2, 3, 4], p=[0.35, 0.35, 0.2, 0.1])),
                c=int(rng.choice([1, 2, 3, 4], p=[0.35, 0.35, 0.2, 0.1])),
                d=int(rng.choice([2, 3, 4, 5], p=[0.1, 0.2, 0.35, 0.35])),
            )
            record.trials.append(Trial(
                participant_id=f"p{p:02d}", method_id=ast.method_id,
                switches=switches, rating=rating))
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# planted-signal task
# ---------------------------------------------------------------------------

def chain_ast(n_nodes: int, method_id: str = "chain",
              category: str = "other") -> Ast:
    """A single chain of ``n_nodes`` uniform-category nodes."""
    from .ast_core import AstNode, validate_ast

    cid = category_id(category)
    nodes = {i: AstNode(i, cid, [i + 1] if i + 1 < n_nodes else [])
             for i in range(n_nodes)}
    return validate_ast(Ast(method_id=method_id, root=0, nodes=nodes))


def planted_pair_for_label(label: int, n_nodes: int) -> tuple[int, int]:
    """The node pair that encodes a class label in the first switch."""
    if label + 1 >= n_nodes:
        raise ValueError(f"label {label} needs at least {label + 2} nodes")
    return (0, label + 1)


def make_planted_task(n_samples: int = 500, n_classes: int = 10,
                      n_nodes: int = 12, seed: int = 0,
                      n_noise_switches: int = 0,
                      test_fraction: float = DEFAULT_TEST_FRACTION,
                      split_seed: int = DEFAULT_SPLIT_SEED,
                      ) -> tuple[list[DatasetRow], list[DatasetRow]]:
    """Uniform-category chain ASTs whose label is carried only by the
    first attention switch.

    Every sample shares one tree and one token category, so a model
    stripped of switches sees identical inputs for every class: the label
    is decodable from switch 1's endpoint pair and nothing else. The
    split is stratified so each class has the same test share.
    """
    if n_classes + 1 >= n_nodes:
        raise ValueError("need n_nodes > n_classes + 1")
    ast = chain_ast(n_nodes)
    rows = []
    for i in range(n_samples):
        label = i % n_classes
        switches = synthesize_gaze(
            ast, mode="planted", seed=int(np.random.SeedSequence((seed, i)).generate_state(1)[0]),
            planted_pair=planted_pair_for_label(label, n_nodes),
            n_noise_switches=n_noise_switches)
        ast_i = Ast(method_id=f"planted-{i:04d}", root=ast.root, nodes=ast.nodes,
                    label_class=label)
        rows.append(row_from_sample(f"planted-{i:04d}", ast_i, switches,
                                    ["original"]))
    return split_rows(rows, test_fraction, split_seed, stratify_by_label=True)
