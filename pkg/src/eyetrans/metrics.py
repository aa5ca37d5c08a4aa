"""Classification and ROUGE metrics.

Classification reports are macro-averaged over the classes that occur in
predictions or labels; ROUGE covers the unigram, bigram, LCS, and
skip-bigram (with and without unigrams) variants.

Empty-sequence conventions, fixed for determinism: comparing two empty
token streams scores F = 1 (vacuous perfection); empty-vs-nonempty
scores 0. These apply to every ROUGE variant, including the degenerate
case where both sides have no n-grams at the requested order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import LengthMismatch

DEFAULT_MAX_SKIP = 4


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def scaled(self, by: float = 100.0) -> "PRF":
        return PRF(self.precision * by, self.recall * by, self.f1 * by)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _prf(overlap: int, n_cand: int, n_ref: int) -> PRF:
    # Zero n-gram counts on non-empty sequences score 0; the vacuous
    # F = 1 convention is sequence-level and handled by the callers.
    if n_cand == 0 or n_ref == 0:
        return PRF(0.0, 0.0, 0.0)
    p = overlap / n_cand
    r = overlap / n_ref
    return PRF(p, r, _f1(p, r))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class ClassReport:
    per_class: dict[int, PRF]
    map_at1: float  # percent
    mar_at1: float
    maf1_at1: float
    accuracy: float  # fraction in [0, 1]


def classification_report(preds, labels) -> ClassReport:
    """Macro-averaged precision/recall/F1 from top-1 predictions.

    Classes appearing in neither list are excluded from the macro mean.
    Per-class F1 is the harmonic mean, 0 when precision+recall is 0.
    """
    preds = list(preds)
    labels = list(labels)
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    classes = sorted(set(preds) | set(labels))
    per_class: dict[int, PRF] = {}
    for c in classes:
        tp = sum(1 for p, l in zip(preds, labels) if p == c and l == c)
        fp = sum(1 for p, l in zip(preds, labels) if p == c and l != c)
        fn = sum(1 for p, l in zip(preds, labels) if p != c and l == c)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        per_class[c] = PRF(p, r, _f1(p, r))
    n = len(classes)
    macro_p = sum(v.precision for v in per_class.values()) / n if n else 0.0
    macro_r = sum(v.recall for v in per_class.values()) / n if n else 0.0
    macro_f = sum(v.f1 for v in per_class.values()) / n if n else 0.0
    acc = (sum(1 for p, l in zip(preds, labels) if p == l) / len(labels)
           if labels else 0.0)
    return ClassReport(per_class, 100.0 * macro_p, 100.0 * macro_r,
                       100.0 * macro_f, acc)


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------

def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum((cand & ref).values())


def rouge_n(candidate, reference, n: int) -> PRF:
    """Clipped n-gram overlap; recall against the reference counts."""
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cand = list(candidate)
    ref = list(reference)
    if not cand and not ref:
        return PRF(1.0, 1.0, 1.0)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0)
    cg = _ngrams(cand, n)
    rg = _ngrams(ref, n)
    return _prf(_clipped_overlap(cg, rg), sum(cg.values()), sum(rg.values()))


def _lcs_len(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> PRF:
    """Longest-common-subsequence recall/precision."""
    cand = list(candidate)
    ref = list(reference)
    if not cand and not ref:
        return PRF(1.0, 1.0, 1.0)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0)
    lcs = _lcs_len(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    return PRF(p, r, _f1(p, r))


def _skip_bigrams(tokens, max_skip: int) -> Counter:
    """Ordered pairs with at most ``max_skip`` tokens between them."""
    out = Counter()
    for i in range(len(tokens)):
        for j in range(i + 1, min(len(tokens), i + max_skip + 2)):
            out[(tokens[i], tokens[j])] += 1
    return out


def rouge_s(candidate, reference, max_skip: int = DEFAULT_MAX_SKIP) -> PRF:
    """Skip-bigram overlap with a bounded gap."""
    if max_skip < 1:
        raise ValueError("max_skip must be >= 1")
    cand = list(candidate)
    ref = list(reference)
    if not cand and not ref:
        return PRF(1.0, 1.0, 1.0)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0)
    cs = _skip_bigrams(cand, max_skip)
    rs = _skip_bigrams(ref, max_skip)
    return _prf(_clipped_overlap(cs, rs), sum(cs.values()), sum(rs.values()))


_BEGIN = object()  # sentinel begin-marker, never equals a real token


def rouge_su(candidate, reference, max_skip: int = DEFAULT_MAX_SKIP) -> PRF:
    """ROUGE-S extended with unigram credit via a begin-of-sequence marker."""
    cand = list(candidate)
    ref = list(reference)
    if not cand and not ref:
        return PRF(1.0, 1.0, 1.0)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0)
    return rouge_s([_BEGIN] + cand, [_BEGIN] + ref, max_skip)


@dataclass
class RougeReport:
    rouge1: PRF
    rouge2: PRF
    rougeS: PRF
    rougeSU: PRF
    rougeL: PRF

    def as_dict(self, scale: float = 100.0) -> dict:
        return {
            name: {"precision": prf.precision * scale,
                   "recall": prf.recall * scale,
                   "f1": prf.f1 * scale}
            for name, prf in (("rouge1", self.rouge1), ("rouge2", self.rouge2),
                              ("rougeS", self.rougeS), ("rougeSU", self.rougeSU),
                              ("rougeL", self.rougeL))
        }


def rouge_report(candidate, reference, max_skip: int = DEFAULT_MAX_SKIP) -> RougeReport:
    return RougeReport(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeS=rouge_s(candidate, reference, max_skip),
        rougeSU=rouge_su(candidate, reference, max_skip),
        rougeL=rouge_l(candidate, reference),
    )


def mean_rouge(reports: list[RougeReport]) -> RougeReport:
    """Arithmetic mean of per-sample reports (corpus-level score)."""
    if not reports:
        raise ValueError("no reports to average")

    def avg(pick):
        n = len(reports)
        return PRF(sum(pick(r).precision for r in reports) / n,
                   sum(pick(r).recall for r in reports) / n,
                   sum(pick(r).f1 for r in reports) / n)

    return RougeReport(avg(lambda r: r.rouge1), avg(lambda r: r.rouge2),
                       avg(lambda r: r.rougeS), avg(lambda r: r.rougeSU),
                       avg(lambda r: r.rougeL))
