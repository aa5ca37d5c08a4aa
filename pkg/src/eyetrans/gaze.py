"""Gaze stream processing: fixations, token mapping, attention switches.

The chain is: raw 60 Hz samples -> I-VT velocity classification ->
fixations -> bounding-box lookup -> node-attributed fixation sequence ->
directed attention switches. A synthetic generator stands in when no
human recordings are available; its transition priors follow the
empirically most frequent category pairs (method declaration <->
variable declaration and friends).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .ast_core import Ast, bfs_serialize
from .categories import category_id
from .errors import DanglingEndpoint, EmptyStream, NoEligibleNodes

# Saccade threshold from standard I-VT practice, in px per 100 ms.
DEFAULT_VELOCITY_THRESHOLD = 400.0
DEFAULT_MIN_FIXATION_MS = 100.0
# Inter-sample gaps longer than this split the stream (tracking loss).
STREAM_GAP_MS = 100.0


@dataclass
class GazeSample:
    x: float
    y: float
    t: float  # milliseconds, monotone non-decreasing
    valid: bool = True


@dataclass
class LayoutBox:
    """Half-open pixel rectangle [x0,x1) x [y0,y1) anchored to one node."""

    node_id: int
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass
class Fixation:
    x: float
    y: float
    start: float
    end: float
    node_id: int | None = None

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class AttentionSwitch:
    ordinal: int  # 1-based temporal position within the trial
    src: int  # node id the gaze left
    dst: int  # node id the gaze landed on


@dataclass(frozen=True)
class QualityRating:
    a: int  # accuracy, 1-5
    b: int  # completeness
    c: int  # verbosity
    d: int  # english proficiency

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if not 1 <= v <= 5:
                raise ValueError(f"rating {name}={v} outside [1, 5]")


@dataclass
class Trial:
    participant_id: str
    method_id: str
    samples: list[GazeSample] = field(default_factory=list)
    fixations: list[Fixation] = field(default_factory=list)
    switches: list[AttentionSwitch] = field(default_factory=list)
    rating: QualityRating = QualityRating(3, 3, 3, 3)


def layout_tokens(source: str, char_w: float, char_h: float,
                  origin: tuple[float, float] = (0.0, 0.0)) -> list[LayoutBox]:
    """Monospace bounding boxes, one per token/node of the parsed source.

    Zero-length tokens (none are produced by the tokenizer, but ingested
    span lists may carry them) are excluded.
    """
    from .parser import parse_with_layout

    _, spans = parse_with_layout(source)
    return spans_to_boxes(spans, char_w, char_h, origin)


def spans_to_boxes(spans, char_w: float, char_h: float,
                   origin: tuple[float, float] = (0.0, 0.0)) -> list[LayoutBox]:
    """Rows/cols are 0-based: x0 = origin.x + col*char_w, y0 = origin.y + row*char_h."""
    ox, oy = origin
    boxes = []
    for span in spans:
        if span.length <= 0:
            continue
        x0 = ox + span.col * char_w
        y0 = oy + span.row * char_h
        boxes.append(LayoutBox(span.node_id, x0, y0, x0 + span.length * char_w,
                               y0 + char_h))
    return boxes


def classify_ivt(samples: list[GazeSample],
                 threshold: float = DEFAULT_VELOCITY_THRESHOLD,
                 min_fixation_ms: float = DEFAULT_MIN_FIXATION_MS) -> list[Fixation]:
    """Velocity-threshold fixation segmentation.

    The velocity of each inter-sample transition is Euclidean distance
    over elapsed time, normalized to px/100ms so the conventional 400
    threshold applies verbatim. Transitions above the threshold (or
    across stream gaps > 100 ms, or with dt == 0) are saccadic; maximal
    runs of samples joined by non-saccadic transitions become fixations
    when their time span reaches ``min_fixation_ms``. Centroid = mean
    position of the run.
    """
    pts = [s for s in samples if s.valid]
    if not pts:
        raise EmptyStream("no valid gaze samples")
    for a, b in zip(pts, pts[1:]):
        if b.t < a.t:
            raise ValueError("gaze samples are not time-sorted")

    fixations: list[Fixation] = []
    run: list[GazeSample] = [pts[0]]

    def flush(run: list[GazeSample]) -> None:
        span = run[-1].t - run[0].t
        if span > 0 and span >= min_fixation_ms:
            cx = sum(s.x for s in run) / len(run)
            cy = sum(s.y for s in run) / len(run)
            fixations.append(Fixation(cx, cy, run[0].t, run[-1].t))

    for prev, cur in zip(pts, pts[1:]):
        dt = cur.t - prev.t
        dist = math.hypot(cur.x - prev.x, cur.y - prev.y)
        saccadic = dt <= 0 or dt > STREAM_GAP_MS or (dist / dt) * 100.0 > threshold
        if saccadic:
            flush(run)
            run = [cur]
        else:
            run.append(cur)
    flush(run)
    return fixations


def map_fixations(fixations: list[Fixation],
                  boxes: list[LayoutBox]) -> list[Fixation]:
    """Attach node ids by centroid containment (boxes are half-open).

    Fixations landing outside every box keep ``node_id=None``; they stay
    in the returned list for duration statistics but are skipped by
    switch extraction.
    """
    out = []
    for fx in fixations:
        node_id = None
        for box in boxes:
            if box.contains(fx.x, fx.y):
                node_id = box.node_id
                break
        out.append(Fixation(fx.x, fx.y, fx.start, fx.end, node_id))
    return out


def extract_switches(fixations: list[Fixation]) -> list[AttentionSwitch]:
    """Directed transitions between consecutive distinct-node fixations.

    Off-token fixations are dropped first; repeated fixations on one node
    collapse (a switch is a transition, never a self-loop). Ordinals run
    1..K in temporal order.
    """
    on_token = [fx for fx in fixations if fx.node_id is not None]
    switches: list[AttentionSwitch] = []
    for prev, cur in zip(on_token, on_token[1:]):
        if prev.node_id != cur.node_id:
            switches.append(AttentionSwitch(len(switches) + 1, prev.node_id, cur.node_id))
    return switches


def validate_switches(switches: list[AttentionSwitch], ast: Ast) -> list[AttentionSwitch]:
    """Check that every endpoint names a real node of ``ast``."""
    for sw in switches:
        for end in (sw.src, sw.dst):
            if end not in ast.nodes:
                raise DanglingEndpoint(
                    f"switch {sw.ordinal}: node {end} not in {ast.method_id}"
                )
    return switches


TIERS = ("original", "filtered", "strict")


def tier_accepts(rating: QualityRating, tier: str) -> bool:
    """Quality gates per tier.

    The published rule for the middle tier bounds accuracy and english
    from below and completeness/verbosity from above; strict uses the
    same shape with strict inequalities.
    """
    if tier == "original":
        return True
    if tier == "filtered":
        return rating.a >= 3 and rating.d >= 3 and rating.b <= 3 and rating.c <= 3
    if tier == "strict":
        return rating.a > 3 and rating.d > 3 and rating.b < 3 and rating.c < 3
    raise ValueError(f"unknown tier {tier!r}")


def filter_by_quality(trials: list[Trial], tier: str) -> list[Trial]:
    return [t for t in trials if tier_accepts(t.rating, tier)]


def build_trial(participant_id: str, method_id: str, samples: list[GazeSample],
                boxes: list[LayoutBox], rating: QualityRating,
                threshold: float = DEFAULT_VELOCITY_THRESHOLD,
                min_fixation_ms: float = DEFAULT_MIN_FIXATION_MS) -> Trial:
    """Run the full per-trial pipeline: I-VT -> box mapping -> switches."""
    fixations = map_fixations(classify_ivt(samples, threshold, min_fixation_ms), boxes)
    return Trial(participant_id, method_id, samples, fixations,
                 extract_switches(fixations), rating)


# ---------------------------------------------------------------------------
# Synthetic gaze
# ---------------------------------------------------------------------------

# Observed counts of the six most frequent category-to-category attention
# switches; used as unnormalized transition weights. Every other pair gets
# the uniform floor.
SWITCH_PRIOR_COUNTS = {
    ("method_declaration", "variable_declaration"): 2593,
    ("variable_declaration", "method_declaration"): 2533,
    ("conditional_statement", "loop_body"): 2189,
    ("loop_body", "conditional_statement"): 2179,
    ("conditional_statement", "method_declaration"): 1615,
    ("method_declaration", "conditional_statement"): 1588,
}
UNIFORM_FLOOR = 1.0


def _prior_matrix() -> np.ndarray:
    from .categories import N_CATEGORIES

    w = np.full((N_CATEGORIES, N_CATEGORIES), UNIFORM_FLOOR)
    for (src, dst), count in SWITCH_PRIOR_COUNTS.items():
        w[category_id(src), category_id(dst)] = float(count)
    return w


def synthesize_gaze(ast: Ast, mode: str = "markov", seed: int = 0,
                    n_fixations: int = 20,
                    planted_pair: tuple[int, int] | None = None,
                    n_noise_switches: int = 0) -> list[AttentionSwitch]:
    """Generate a deterministic synthetic switch sequence for an Ast.

    ``markov`` walks the node set with transition weights proportional to
    the empirical category-pair counts (uniform floor elsewhere).
    ``planted`` emits a first switch over ``planted_pair`` (the label-coded
    node pair chosen by the task constructor) followed by
    ``n_noise_switches`` seeded random continuations.
    """
    if n_fixations < 1:
        raise ValueError("n_fixations must be >= 1")
    seq = bfs_serialize(ast)
    node_ids = np.array(seq.node_ids)
    cats = np.array(seq.categories)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xE7E))))

    if mode == "planted":
        if planted_pair is None:
            raise ValueError("planted mode needs the label's node pair")
        src, dst = planted_pair
        validate_switches([AttentionSwitch(1, src, dst)], ast)
        switches = [AttentionSwitch(1, src, dst)]
        cur = dst
        for k in range(2, 2 + n_noise_switches):
            choices = node_ids[node_ids != cur]
            if choices.size == 0:
                break
            cur = int(rng.choice(choices))
            switches.append(AttentionSwitch(k, switches[-1].dst, cur))
        return switches

    if mode != "markov":
        raise ValueError(f"unknown synthesis mode {mode!r}")

    if len(node_ids) < 2:
        return []
    priors = _prior_matrix()
    start_w = priors[cats].sum(axis=1)
    if not np.any(start_w > 0):
        raise NoEligibleNodes(f"{ast.method_id}: no category has positive prior weight")
    cur_idx = int(rng.choice(len(node_ids), p=start_w / start_w.sum()))
    switches: list[AttentionSwitch] = []
    for k in range(1, n_fixations):
        w = priors[cats[cur_idx], cats].copy()
        w[cur_idx] = 0.0
        total = w.sum()
        if total <= 0:
            w = np.ones(len(node_ids))
            w[cur_idx] = 0.0
            total = w.sum()
        nxt_idx = int(rng.choice(len(node_ids), p=w / total))
        switches.append(AttentionSwitch(k, int(node_ids[cur_idx]), int(node_ids[nxt_idx])))
        cur_idx = nxt_idx
    return switches


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def read_gaze_csv(path) -> list[GazeSample]:
    """Gaze CSV with header ``t_ms,x_px,y_px,valid``."""
    samples = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            samples.append(GazeSample(
                x=float(row["x_px"]), y=float(row["y_px"]), t=float(row["t_ms"]),
                valid=row["valid"].strip() in ("1", "true", "True"),
            ))
    return samples


def read_ratings_csv(path) -> dict[tuple[str, str], QualityRating]:
    """Ratings CSV with header ``participant_id,method_id,a,b,c,d``."""
    ratings = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["participant_id"], row["method_id"])
            ratings[key] = QualityRating(int(row["a"]), int(row["b"]),
                                         int(row["c"]), int(row["d"]))
    return ratings
