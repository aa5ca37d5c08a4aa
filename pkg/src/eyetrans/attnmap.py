"""Attention-map extraction and export (CSV, PGM, SVG).

The maps are the per-head scaled score matrices QK^T/sqrt(d_k) of the
first encoder block, captured pre- and post-softmax, with the CLS row
at index 0 and token category names as headers. A paired run against a
second model additionally emits per-head difference maps and a
row-entropy diagnostic (both descriptive, not asserted anywhere).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .categories import CATEGORY_NAMES
from .dataset import DatasetRow, atomic_write_text
from .errors import SampleTooLong
from .models import make_batch

ATTNMAP_FORMAT_VERSION = 1


@dataclass
class AttentionDump:
    method_id: str
    headers: list[str]  # "CLS" + per-token category names
    scores: np.ndarray  # [H, n+1, n+1] pre-softmax
    weights: np.ndarray  # [H, n+1, n+1] post-softmax

    @property
    def n_heads(self) -> int:
        return self.scores.shape[0]


def extract_attention(model, row: DatasetRow) -> AttentionDump:
    """Run one sample through the model, capturing first-block attention."""
    if len(row.tokens) > model.cfg.max_tokens:
        raise SampleTooLong(
            f"{row.id}: {len(row.tokens)} tokens exceeds {model.cfg.max_tokens}")
    batch = make_batch([row], model.cfg.s_max, baseline_mode=False,
                       need_labels=False)
    collected: list[dict] = []
    model.encode(batch, collect=collected)
    maps = collected[0]
    headers = ["CLS"] + [CATEGORY_NAMES[c] for c in row.tokens]
    return AttentionDump(method_id=row.id, headers=headers,
                         scores=maps["scores"][0], weights=maps["weights"][0])


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def matrix_to_csv(matrix: np.ndarray, headers: list[str]) -> str:
    lines = ["," + ",".join(headers)]
    for name, rowvals in zip(headers, matrix):
        lines.append(name + "," + ",".join(f"{v:.8g}" for v in rowvals))
    return "\n".join(lines) + "\n"


def matrix_to_pgm(matrix: np.ndarray) -> str:
    """ASCII PGM (P2); pixels are the affine min-max rescale to 0..255."""
    lo = float(matrix.min())
    hi = float(matrix.max())
    if hi > lo:
        pixels = np.round((matrix - lo) / (hi - lo) * 255.0).astype(int)
    else:
        pixels = np.zeros(matrix.shape, dtype=int)
    h, w = matrix.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(v) for v in rowvals) for rowvals in pixels)
    return "\n".join(lines) + "\n"


def matrix_to_svg(matrix: np.ndarray, headers: list[str], cell: int = 18,
                  label_space: int = 110) -> str:
    """Grayscale heatmap with category labels on both axes."""
    n = matrix.shape[0]
    lo = float(matrix.min())
    hi = float(matrix.max())
    span = hi - lo if hi > lo else 1.0
    width = label_space + n * cell + 4
    height = label_space + n * cell + 4
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="8">',
        f'<!-- format_version={ATTNMAP_FORMAT_VERSION} -->',
    ]
    for i, rowvals in enumerate(matrix):
        for j, v in enumerate(rowvals):
            # monochrome ramp: dark = high attention
            level = int(round(255 - (v - lo) / span * 255))
            x = label_space + j * cell
            y = label_space + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({level},{level},{level})"/>')
    for i, name in enumerate(headers):
        y = label_space + i * cell + cell - 5
        parts.append(f'<text x="2" y="{y}">{name[:14]}</text>')
        x = label_space + i * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{label_space - 4}" '
            f'transform="rotate(-60 {x} {label_space - 4})">{name[:14]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def row_entropy(weights: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) per attention row."""
    w = np.clip(weights, 1e-12, 1.0)
    ent = -(weights * np.log(w)).sum(axis=-1)
    return ent


def export_attention_dump(dump: AttentionDump, out_dir: str,
                          prefix: str = "attn") -> list[str]:
    """One CSV + PGM + SVG per head and stage; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for stage, tensor in (("scores", dump.scores), ("weights", dump.weights)):
        for h in range(dump.n_heads):
            base = os.path.join(out_dir, f"{prefix}_head{h}_{stage}")
            atomic_write_text(base + ".csv", matrix_to_csv(tensor[h], dump.headers))
            atomic_write_text(base + ".pgm", matrix_to_pgm(tensor[h]))
            atomic_write_text(base + ".svg", matrix_to_svg(tensor[h], dump.headers))
            written.extend([base + ".csv", base + ".pgm", base + ".svg"])
    return written


def export_comparison(eyetrans_dump: AttentionDump, baseline_dump: AttentionDump,
                      out_dir: str) -> list[str]:
    """Difference maps (switch-aware minus baseline) and row entropies."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    headers = eyetrans_dump.headers
    for h in range(eyetrans_dump.n_heads):
        diff = eyetrans_dump.weights[h] - baseline_dump.weights[h]
        base = os.path.join(out_dir, f"diff_head{h}")
        atomic_write_text(base + ".csv", matrix_to_csv(diff, headers))
        atomic_write_text(base + ".pgm", matrix_to_pgm(diff))
        atomic_write_text(base + ".svg", matrix_to_svg(diff, headers))
        written.extend([base + ".csv", base + ".pgm", base + ".svg"])
    lines = ["head,row,token,entropy_eyetrans,entropy_baseline"]
    for h in range(eyetrans_dump.n_heads):
        ent_e = row_entropy(eyetrans_dump.weights[h])
        ent_b = row_entropy(baseline_dump.weights[h])
        for i, name in enumerate(headers):
            lines.append(f"{h},{i},{name},{ent_e[i]:.8g},{ent_b[i]:.8g}")
    path = os.path.join(out_dir, "row_entropy.csv")
    atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)
    return written
