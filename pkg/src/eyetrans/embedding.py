"""The three embedding tables and the switch-fusion input layer.

Each token row of the model input is built as

    E[cat] * (1 + act(sum of P over outgoing switches))
  + H[height] * (1 + act(sum of P over incoming switches))

with ``act`` = relu by default, so a token with no incident switches
reduces bit-exactly to ``E[cat] + H[height]``. A switch's embedding
``P[k]`` depends only on its temporal ordinal ``k``, never on its
endpoints; ordinals beyond the table clamp to the last row. A learned
CLS vector is prepended at row 0 and never participates in switches.

Ablation knobs cover the studied variants: sigmoid activation, dropping
the ``+1``, and zeroing the height term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ast_core import MAX_HEIGHT, TokenSequence
from .categories import N_CATEGORIES
from .errors import UnknownEndpoint
from .gaze import AttentionSwitch
from .tensor import (Tensor, add, broadcast_to, concat, embedding, matmul,
                     mul, relu, reshape, sigmoid)

DEFAULT_S_MAX = 512
INIT_SCALE = 0.05


@dataclass(frozen=True)
class FusionConfig:
    activation: str = "relu"  # relu | sigmoid
    keep_plus_one: bool = True
    use_height: bool = True


def ablate(variant: str = "default") -> FusionConfig:
    """Named fusion variants: default | sigmoid | no_plus_one | no_height."""
    base = FusionConfig()
    if variant == "default":
        return base
    if variant == "sigmoid":
        return replace(base, activation="sigmoid")
    if variant == "no_plus_one":
        return replace(base, keep_plus_one=False)
    if variant == "no_height":
        return replace(base, use_height=False)
    raise ValueError(f"unknown ablation {variant!r}")


class EmbeddingTables:
    """Trainable category (E), height (H), ordinal (P), and CLS tables."""

    def __init__(self, d: int = 32, n_categories: int = N_CATEGORIES,
                 max_height: int = MAX_HEIGHT, s_max: int = DEFAULT_S_MAX,
                 seed: int = 0, dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xEB))))

        def init(*shape):
            return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, shape).astype(dtype),
                          requires_grad=True)

        self.d = d
        self.s_max = s_max
        self.max_height = max_height
        self.E = init(n_categories, d)
        self.H = init(max_height + 1, d)
        self.P = init(s_max, d)  # row k-1 serves ordinal k
        self.CLS = init(d)

    def params(self) -> dict[str, Tensor]:
        return {"embed.E": self.E, "embed.H": self.H,
                "embed.P": self.P, "embed.CLS": self.CLS}

    def ordinal_row(self, ordinal: int) -> int:
        if ordinal < 1:
            raise ValueError(f"switch ordinal {ordinal} must be >= 1")
        return min(ordinal, self.s_max) - 1


def _activation(name: str):
    if name == "relu":
        return relu
    if name == "sigmoid":
        return sigmoid
    raise ValueError(f"unknown activation {name!r}")


def build_switch_arrays(n_tokens: int, switches, s_max: int, dtype=np.float32):
    """Dense incidence form of a switch list over sequence positions.

    ``switches`` is a list of (ordinal, src_pos, dst_pos) triples indexed
    into the token sequence. Returns (a_out [n, K], a_in [n, K],
    ordinal_rows [K]) with ordinals clamped into the P table.
    """
    k = len(switches)
    a_out = np.zeros((n_tokens, max(k, 1)), dtype=dtype)
    a_in = np.zeros((n_tokens, max(k, 1)), dtype=dtype)
    rows = np.zeros(max(k, 1), dtype=np.int64)
    for j, (ordinal, src, dst) in enumerate(switches):
        if ordinal < 1:
            raise ValueError(f"switch ordinal {ordinal} must be >= 1")
        a_out[src, j] = 1.0
        a_in[dst, j] = 1.0
        rows[j] = min(ordinal, s_max) - 1
    return a_out, a_in, rows


def switches_to_positions(tokens: TokenSequence,
                          switches: list[AttentionSwitch]) -> list[tuple[int, int, int]]:
    """Map node-id switch endpoints onto BFS sequence positions."""
    pos = {nid: i for i, nid in enumerate(tokens.node_ids)}
    out = []
    for sw in switches:
        if sw.src not in pos or sw.dst not in pos:
            missing = sw.src if sw.src not in pos else sw.dst
            raise UnknownEndpoint(f"switch {sw.ordinal} names node {missing} "
                                  f"absent from the token sequence")
        out.append((sw.ordinal, pos[sw.src], pos[sw.dst]))
    return out


def fuse_batch(cats: np.ndarray, heights: np.ndarray, token_mask: np.ndarray,
               a_out: np.ndarray, a_in: np.ndarray, ordinal_rows: np.ndarray,
               tables: EmbeddingTables, cfg: FusionConfig,
               perturb=None) -> Tensor:
    """Fused input embeddings for a padded batch.

    Shapes: cats/heights/token_mask [B, n]; a_out/a_in [B, n, K];
    ordinal_rows [B, K]. Padded token positions must carry token_mask 0
    and zero incidence columns. Returns [B, n+1, d] with the CLS row at
    position 0. ``perturb`` (if given) maps the gathered semantic rows
    [B, n, d] to their perturbed version before fusion.
    """
    act = _activation(cfg.activation)
    B, n = cats.shape
    d = tables.d
    dtype = tables.E.dtype

    mask3 = Tensor(np.ascontiguousarray(token_mask[..., None], dtype=dtype))
    e_rows = mul(embedding(tables.E, cats), mask3)
    if perturb is not None:
        e_rows = mul(perturb(e_rows), mask3)

    p_rows = embedding(tables.P, ordinal_rows)  # [B, K, d]
    out_sum = matmul(Tensor(np.ascontiguousarray(a_out, dtype=dtype)), p_rows)
    in_sum = matmul(Tensor(np.ascontiguousarray(a_in, dtype=dtype)), p_rows)

    if cfg.keep_plus_one:
        e_gate = add(act(out_sum), Tensor(np.ones((), dtype=dtype)))
    else:
        e_gate = act(out_sum)
    fused = mul(e_rows, e_gate)

    if cfg.use_height:
        h_rows = mul(embedding(tables.H, heights), mask3)
        if cfg.keep_plus_one:
            h_gate = add(act(in_sum), Tensor(np.ones((), dtype=dtype)))
        else:
            h_gate = act(in_sum)
        fused = add(fused, mul(h_rows, h_gate))

    cls = broadcast_to(reshape(tables.CLS, (1, 1, d)), (B, 1, d))
    return concat([cls, fused], axis=1)


def fuse(tokens: TokenSequence, switches: list[AttentionSwitch],
         tables: EmbeddingTables, cfg: FusionConfig = FusionConfig(),
         perturb=None) -> Tensor:
    """Single-sample fusion: returns the [n_tokens+1, d] input matrix."""
    pos_switches = switches_to_positions(tokens, switches)
    n = len(tokens)
    a_out, a_in, rows = build_switch_arrays(n, pos_switches, tables.s_max,
                                            dtype=tables.E.dtype)
    fused = fuse_batch(
        cats=np.asarray(tokens.categories)[None, :],
        heights=np.asarray(tokens.heights)[None, :],
        token_mask=np.ones((1, n), dtype=tables.E.dtype),
        a_out=a_out[None], a_in=a_in[None], ordinal_rows=rows[None],
        tables=tables, cfg=cfg, perturb=perturb,
    )
    return reshape(fused, (n + 1, tables.d))


def switch_aggregate(switches: list[AttentionSwitch], direction: str,
                     tables: EmbeddingTables) -> dict[int, np.ndarray]:
    """Per-node sum of ordinal embeddings over one switch direction.

    Pure lookup (no gradients); nodes with no matching switch map to the
    zero vector lazily, i.e. they are absent from the returned dict.
    """
    if direction not in ("outgoing", "incoming"):
        raise ValueError(f"direction must be outgoing|incoming, got {direction!r}")
    acc: dict[int, np.ndarray] = {}
    for sw in switches:
        node = sw.src if direction == "outgoing" else sw.dst
        row = tables.P.data[tables.ordinal_row(sw.ordinal)]
        if node in acc:
            acc[node] = acc[node] + row
        else:
            acc[node] = row.copy()
    return acc
