"""Task models and training loops.

Two models share the fused embedding front end: a CLS-readout encoder
classifier (function-name prediction) and an encoder-decoder
sequence generator (natural-language summaries). The perturbation
harness applies token-level dropout and Gaussian noise to the semantic
embedding rows only, before fusion, so the height and switch channels
survive untouched.

Everything is deterministic given the run seed: model init, batch order,
and every perturbation draw derive from seeded generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import PAD_ID, BOS_ID, EOS_ID, DatasetRow
from .embedding import EmbeddingTables, FusionConfig, build_switch_arrays, fuse_batch
from .errors import EmptyDataset, LabelOutOfRange, SampleTooLong
from .metrics import ClassReport, classification_report, mean_rouge, rouge_report
from .nn import (AdamState, DecoderBlock, EncoderBlock, ModelConfig, Tape,
                 adam_step, causal_blocked, glorot, padding_blocked)
from .tensor import Tensor, add, cross_entropy, embedding, index, matmul, mul, reshape

PAPER_SEEDS = (0, 1, 42, 123, 12345)


@dataclass(frozen=True)
class PerturbConfig:
    R: float = 0.0  # token dropout rate on semantic rows
    N: float = 0.0  # gaussian sigma on semantic rows
    apply_at: str = "both"  # train | eval | both

    def __post_init__(self):
        if not 0.0 <= self.R <= 1.0:
            raise ValueError(f"dropout rate {self.R} outside [0, 1]")
        if self.N < 0.0:
            raise ValueError(f"noise sigma {self.N} must be >= 0")
        if self.apply_at not in ("train", "eval", "both"):
            raise ValueError(f"bad apply_at {self.apply_at!r}")

    def active(self, phase: str) -> bool:
        if self.R == 0.0 and self.N == 0.0:
            return False
        return self.apply_at == "both" or self.apply_at == phase


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 256
    seed: int = 0
    tier: str = "original"
    baseline_mode: bool = False  # strip all switches from the inputs


def perturb_semantic(e_rows: Tensor, R: float, N: float, seed) -> Tensor:
    """Noise then token dropout on gathered semantic rows [B, n, d].

    The whole row of a dropped token goes to zero (so R=1 leaves only the
    height-side terms after fusion); noise is i.i.d. per element. The CLS
    vector never passes through here. Identity when R=N=0.
    """
    if R == 0.0 and N == 0.0:
        return e_rows
    rng = seed if isinstance(seed, np.random.Generator) else \
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    shape = e_rows.shape
    out = e_rows
    if N > 0.0:
        noise = rng.normal(0.0, N, size=shape).astype(e_rows.dtype)
        out = add(out, Tensor(noise))
    if R > 0.0:
        keep = (rng.random(size=shape[:-1]) >= R).astype(e_rows.dtype)
        out = mul(out, Tensor(keep[..., None]))
    return out


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    cats: np.ndarray  # [B, n]
    heights: np.ndarray  # [B, n]
    token_mask: np.ndarray  # [B, n], 1.0 = real token
    a_out: np.ndarray  # [B, n, K]
    a_in: np.ndarray  # [B, n, K]
    ordinal_rows: np.ndarray  # [B, K]
    labels: np.ndarray | None = None  # [B]
    dec_in: np.ndarray | None = None  # [B, T]
    dec_target: np.ndarray | None = None  # [B, T]

    @property
    def size(self) -> int:
        return self.cats.shape[0]

    def key_mask(self) -> np.ndarray:
        # CLS column is always attendable
        cls_col = np.ones((self.size, 1), dtype=self.token_mask.dtype)
        return np.concatenate([cls_col, self.token_mask], axis=1)


def make_batch(rows: list[DatasetRow], s_max: int, baseline_mode: bool,
               max_summary_len: int = 30, dtype=np.float32,
               need_labels: bool = True, need_summary: bool = False) -> Batch:
    n_max = max(len(r.tokens) for r in rows)
    switch_lists = [[] if baseline_mode else r.switches for r in rows]
    k_max = max(1, max(len(s) for s in switch_lists))
    b = len(rows)
    cats = np.zeros((b, n_max), dtype=np.int64)
    heights = np.zeros((b, n_max), dtype=np.int64)
    token_mask = np.zeros((b, n_max), dtype=dtype)
    a_out = np.zeros((b, n_max, k_max), dtype=dtype)
    a_in = np.zeros((b, n_max, k_max), dtype=dtype)
    ords = np.zeros((b, k_max), dtype=np.int64)
    for i, (row, switches) in enumerate(zip(rows, switch_lists)):
        n = len(row.tokens)
        cats[i, :n] = row.tokens
        heights[i, :n] = row.heights
        token_mask[i, :n] = 1.0
        ao, ai, rr = build_switch_arrays(n, switches, s_max, dtype=dtype)
        a_out[i, :n, :ao.shape[1]] = ao
        a_in[i, :n, :ai.shape[1]] = ai
        ords[i, :len(rr)] = rr

    labels = None
    if need_labels:
        labels = np.array([r.label_class for r in rows], dtype=np.int64)
    dec_in = dec_target = None
    if need_summary:
        t_max = min(max_summary_len, max(len(r.summary or []) for r in rows) + 1)
        dec_in = np.full((b, t_max), PAD_ID, dtype=np.int64)
        dec_target = np.full((b, t_max), PAD_ID, dtype=np.int64)
        for i, row in enumerate(rows):
            toks = list(row.summary or [])[: t_max - 1]
            dec_in[i, 0] = BOS_ID
            dec_in[i, 1:1 + len(toks)] = toks
            dec_target[i, :len(toks)] = toks
            dec_target[i, len(toks)] = EOS_ID
    return Batch(cats, heights, token_mask, a_out, a_in, ords,
                 labels, dec_in, dec_target)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class FunctionalModel:
    """4-block encoder classifier; prediction reads only the CLS row."""

    kind = "functional"

    def __init__(self, cfg: ModelConfig, fusion: FusionConfig, seed: int = 0,
                 dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xF0))))
        self.cfg = cfg
        self.fusion = fusion
        self.dtype = dtype
        self.tables = EmbeddingTables(d=cfg.d, max_height=cfg.max_height,
                                      s_max=cfg.s_max, seed=seed, dtype=dtype)
        self.blocks = [EncoderBlock(cfg, rng, dtype)
                       for _ in range(cfg.n_encoder_layers)]
        self.head = glorot(rng, cfg.d, cfg.n_classes, dtype)

    def encode(self, batch: Batch, perturb=None, collect: list | None = None,
               drop_rng=None) -> Tensor:
        if batch.cats.shape[1] + 1 > self.cfg.max_tokens + 1:
            raise SampleTooLong(
                f"{batch.cats.shape[1]} tokens exceeds max_tokens={self.cfg.max_tokens}")
        x = fuse_batch(batch.cats, batch.heights, batch.token_mask,
                       batch.a_out, batch.a_in, batch.ordinal_rows,
                       self.tables, self.fusion, perturb=perturb)
        blocked = padding_blocked(batch.key_mask())
        for i, blk in enumerate(self.blocks):
            x = blk(x, blocked=blocked, collect=collect if i == 0 else None,
                    drop_rng=drop_rng)
        return x

    def logits(self, batch: Batch, perturb=None, collect: list | None = None,
               drop_rng=None) -> Tensor:
        enc = self.encode(batch, perturb, collect, drop_rng)
        cls = index(enc, (slice(None), 0))  # [B, d]
        return matmul(cls, self.head)

    def loss(self, batch: Batch, perturb=None, drop_rng=None) -> Tensor:
        if batch.labels is None:
            raise EmptyDataset("classification batch has no labels")
        if batch.labels.max(initial=0) >= self.cfg.n_classes or batch.labels.min(initial=0) < 0:
            raise LabelOutOfRange(
                f"labels outside [0, {self.cfg.n_classes})")
        return cross_entropy(self.logits(batch, perturb, drop_rng=drop_rng),
                             batch.labels)

    def predict(self, batch: Batch, perturb=None) -> np.ndarray:
        return np.argmax(self.logits(batch, perturb).data, axis=-1)

    def params(self) -> dict[str, Tensor]:
        out = self.tables.params()
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"enc{i}"))
        out["head.W"] = self.head
        return out


class Seq2SeqModel:
    """Encoder-decoder summary generator, teacher-forced training."""

    kind = "seq2seq"

    def __init__(self, cfg: ModelConfig, fusion: FusionConfig, seed: int = 0,
                 dtype=np.float32):
        if cfg.n_decoder_layers <= 0:
            raise ValueError("seq2seq model needs n_decoder_layers > 0")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x52))))
        self.cfg = cfg
        self.fusion = fusion
        self.dtype = dtype
        self.tables = EmbeddingTables(d=cfg.d, max_height=cfg.max_height,
                                      s_max=cfg.s_max, seed=seed, dtype=dtype)
        self.blocks = [EncoderBlock(cfg, rng, dtype)
                       for _ in range(cfg.n_encoder_layers)]
        self.dec_blocks = [DecoderBlock(cfg, rng, dtype)
                           for _ in range(cfg.n_decoder_layers)]
        scale = 0.05
        self.tok_table = Tensor(
            rng.uniform(-scale, scale, (cfg.vocab_size, cfg.d)).astype(dtype),
            requires_grad=True)
        self.pos_table = Tensor(
            rng.uniform(-scale, scale, (cfg.max_summary_len, cfg.d)).astype(dtype),
            requires_grad=True)
        self.out_head = glorot(rng, cfg.d, cfg.vocab_size, dtype)

    def encode(self, batch: Batch, perturb=None, collect: list | None = None,
               drop_rng=None) -> Tensor:
        x = fuse_batch(batch.cats, batch.heights, batch.token_mask,
                       batch.a_out, batch.a_in, batch.ordinal_rows,
                       self.tables, self.fusion, perturb=perturb)
        blocked = padding_blocked(batch.key_mask())
        for i, blk in enumerate(self.blocks):
            x = blk(x, blocked=blocked, collect=collect if i == 0 else None,
                    drop_rng=drop_rng)
        return x

    def decode_logits(self, enc_out: Tensor, enc_key_mask: np.ndarray,
                      dec_in: np.ndarray, drop_rng=None) -> Tensor:
        t = dec_in.shape[1]
        if t > self.cfg.max_summary_len:
            raise SampleTooLong(f"summary length {t} exceeds {self.cfg.max_summary_len}")
        y = add(embedding(self.tok_table, dec_in),
                embedding(self.pos_table, np.arange(t)))
        self_blocked = (causal_blocked(t)[None, None]
                        | padding_blocked((dec_in != PAD_ID).astype(np.float32)))
        cross_blocked = padding_blocked(enc_key_mask)
        for blk in self.dec_blocks:
            y = blk(y, enc_out, self_blocked=self_blocked,
                    cross_blocked=cross_blocked, drop_rng=drop_rng)
        return matmul(y, self.out_head)

    def loss(self, batch: Batch, perturb=None, drop_rng=None) -> Tensor:
        if batch.dec_in is None:
            raise EmptyDataset("seq2seq batch has no summaries")
        if batch.dec_target.max(initial=0) >= self.cfg.vocab_size:
            raise LabelOutOfRange(f"summary token outside [0, {self.cfg.vocab_size})")
        enc = self.encode(batch, perturb, drop_rng=drop_rng)
        logits = self.decode_logits(enc, batch.key_mask(), batch.dec_in, drop_rng)
        b, t, v = logits.shape
        return cross_entropy(reshape(logits, (b * t, v)),
                             batch.dec_target.reshape(-1), ignore_index=PAD_ID)

    def greedy_decode(self, batch: Batch, perturb=None) -> list[list[int]]:
        """Argmax decoding until EOS or the length cap; ties pick the
        lowest token id (argmax convention)."""
        enc = self.encode(batch, perturb)
        enc_mask = batch.key_mask()
        b = batch.size
        done = np.zeros(b, dtype=bool)
        seqs = np.full((b, 1), BOS_ID, dtype=np.int64)
        outputs: list[list[int]] = [[] for _ in range(b)]
        for _ in range(self.cfg.max_summary_len):
            logits = self.decode_logits(enc, enc_mask, seqs).data
            nxt = np.argmax(logits[:, -1, :], axis=-1)
            for i in range(b):
                if done[i]:
                    continue
                if nxt[i] == EOS_ID:
                    done[i] = True
                else:
                    outputs[i].append(int(nxt[i]))
            if done.all():
                break
            seqs = np.concatenate([seqs, np.where(done, PAD_ID, nxt)[:, None]], axis=1)
            if seqs.shape[1] >= self.cfg.max_summary_len:
                break
        return outputs

    def params(self) -> dict[str, Tensor]:
        out = self.tables.params()
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"enc{i}"))
        for i, blk in enumerate(self.dec_blocks):
            out.update(blk.params(f"dec{i}"))
        out["dec.tok"] = self.tok_table
        out["dec.pos"] = self.pos_table
        out["head.W"] = self.out_head
        return out


def build_model(kind: str, cfg: ModelConfig, fusion: FusionConfig, seed: int,
                dtype=np.float32):
    if kind == "functional":
        return FunctionalModel(cfg, fusion, seed, dtype)
    if kind == "seq2seq":
        return Seq2SeqModel(cfg, fusion, seed, dtype)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# training / evaluation
# ---------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    metrics: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainResult:
    model: object
    logs: list[EpochLog]
    optimizer: AdamState


def _perturb_fn(perturb_cfg: PerturbConfig | None, phase: str, seed_tuple):
    if perturb_cfg is None or not perturb_cfg.active(phase):
        return None
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_tuple)))
    return lambda rows: perturb_semantic(rows, perturb_cfg.R, perturb_cfg.N, rng)


def train(model_kind: str, train_rows: list[DatasetRow],
          test_rows: list[DatasetRow], cfg: ModelConfig,
          train_cfg: TrainConfig, perturb_cfg: PerturbConfig | None = None,
          fusion: FusionConfig = FusionConfig(), eval_each_epoch: bool = True,
          model=None, optimizer: AdamState | None = None,
          start_epoch: int = 0) -> TrainResult:
    """Adam training with per-epoch logging; deterministic per seed.

    ``model``/``optimizer``/``start_epoch`` allow resuming a checkpointed
    run: epoch-level randomness is keyed by (seed, epoch), so a resumed
    run replays the exact remaining schedule.
    """
    if not train_rows:
        raise EmptyDataset("no training rows")
    if model is None:
        model = build_model(model_kind, cfg, fusion, train_cfg.seed)
    if optimizer is None:
        optimizer = AdamState()
    params = model.params()
    need_summary = model_kind == "seq2seq"
    batch_size = max(1, min(train_cfg.batch_size, len(train_rows)))
    logs: list[EpochLog] = []

    for epoch in range(start_epoch, train_cfg.epochs):
        order_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((train_cfg.seed, epoch, 0x0BD))))
        order = order_rng.permutation(len(train_rows))
        total_loss = 0.0
        total_n = 0
        for bi in range(0, len(order), batch_size):
            rows = [train_rows[j] for j in order[bi:bi + batch_size]]
            batch = make_batch(rows, cfg.s_max, train_cfg.baseline_mode,
                               cfg.max_summary_len,
                               need_labels=not need_summary,
                               need_summary=need_summary)
            perturb = _perturb_fn(perturb_cfg, "train",
                                  (train_cfg.seed, epoch, bi, 0xD0))
            drop_rng = None
            if cfg.dropout > 0:
                drop_rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence((train_cfg.seed, epoch, bi, 0xDD))))
            with Tape() as tape:
                loss = model.loss(batch, perturb=perturb, drop_rng=drop_rng)
            tape.backward(loss)
            adam_step(params, optimizer, lr=train_cfg.lr)
            for p in params.values():
                p.zero_grad()
            total_loss += float(loss.data) * len(rows)
            total_n += len(rows)
        log = EpochLog(epoch=epoch, train_loss=total_loss / total_n)
        if eval_each_epoch and test_rows:
            log.metrics = evaluate(model, test_rows, perturb_cfg,
                                   train_cfg=train_cfg)
        logs.append(log)
    return TrainResult(model=model, logs=logs, optimizer=optimizer)


def evaluate(model, rows: list[DatasetRow],
             perturb_cfg: PerturbConfig | None = None,
             train_cfg: TrainConfig | None = None,
             eval_seed: int = 0xE7A1) -> dict[str, float]:
    """Metric report over a split; never mutates the model.

    Perturbations apply here only when the config says eval-time
    perturbation is in scope.
    """
    if not rows:
        return {}
    seed = (train_cfg.seed if train_cfg else 0, eval_seed)
    perturb = _perturb_fn(perturb_cfg, "eval", seed)
    baseline = bool(train_cfg.baseline_mode) if train_cfg else False
    if model.kind == "functional":
        batch = make_batch(rows, model.cfg.s_max, baseline,
                           model.cfg.max_summary_len, need_labels=True)
        preds = model.predict(batch, perturb=perturb)
        report: ClassReport = classification_report(
            preds.tolist(), [r.label_class for r in rows])
        return {"accuracy": report.accuracy, "maf1": report.maf1_at1,
                "map": report.map_at1, "mar": report.mar_at1}
    batch = make_batch(rows, model.cfg.s_max, baseline,
                       model.cfg.max_summary_len,
                       need_labels=False, need_summary=True)
    decoded = model.greedy_decode(batch, perturb=perturb)
    reports = [rouge_report(d, r.summary or []) for d, r in zip(decoded, rows)]
    mean = mean_rouge(reports)
    return {
        "rouge1": mean.rouge1.f1 * 100.0, "rouge2": mean.rouge2.f1 * 100.0,
        "rougeS": mean.rougeS.f1 * 100.0, "rougeSU": mean.rougeSU.f1 * 100.0,
        "rougeL": mean.rougeL.f1 * 100.0,
    }


# ---------------------------------------------------------------------------
# summary paraphrasing (deterministic stand-in for LLM rewording)
# ---------------------------------------------------------------------------

# phrase -> alternatives; the seed picks one. Longest phrases match first.
PARAPHRASE_RULES: list[tuple[tuple[str, ...], tuple[tuple[str, ...], ...]]] = [
    (("returns",), (("gives", "back"),)),
    (("computes",), (("calculates",),)),
    (("calculates",), (("computes",),)),
    (("prints",), (("writes", "out"),)),
    (("sums",), (("adds", "up"),)),
    (("the", "sum", "of"), (("the", "total", "of"),)),
    (("maximum",), (("largest",), ("biggest",))),
    (("minimum",), (("smallest",),)),
    (("checks", "whether"), (("tests", "if"), ("checks", "if"))),
    (("number", "of"), (("count", "of"),)),
]


def label_paraphrase(summary_tokens: list[str], seed: int) -> list[str]:
    """Rule-based phrase substitution; identity when nothing matches."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x9A))))
    tokens = list(summary_tokens)
    out: list[str] = []
    i = 0
    rules = sorted(PARAPHRASE_RULES, key=lambda r: -len(r[0]))
    while i < len(tokens):
        for phrase, alts in rules:
            if tuple(tokens[i:i + len(phrase)]) == phrase:
                pick = alts[int(rng.integers(len(alts)))]
                out.extend(pick)
                i += len(phrase)
                break
        else:
            out.append(tokens[i])
            i += 1
    return out
