"""Prediction parsing, entity-level precision/recall/F1, and significance testing.

Generated output is scanned for lines in the prompt grammar. Each labeled
line is matched to a document entity by exact text (outer whitespace
trimmed, case-sensitive); when several entities share the text, the line's
box disambiguates, first against page coordinates and then against the
cropped-frame coordinates when supplied. If the box settles nothing, the
first still-unlabeled entity in document order wins. Labels compare
case-insensitively after trimming unless strict mode is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dataset import BoxRect, Document
from .errors import (
    AllZeroDifferences,
    LengthMismatch,
    MissingGold,
    NoParsableLines,
)
from .prompting import ENTITY_LINE_RE, unescape_text


@dataclass
class Prediction:
    """Per-entity predicted labels for one document, plus unusable output lines."""

    doc_id: str
    labels: dict[str, str] = field(default_factory=dict)
    unmatched_output_lines: list[str] = field(default_factory=list)


def parse_predictions(
    raw: str,
    doc: Document,
    cropped_boxes: Sequence[BoxRect] | None = None,
) -> Prediction:
    """Extract entity labels from raw LLM output.

    ``cropped_boxes`` aligns with ``doc.entities`` and enables box matching in
    the cropped frame the prompt used. Labeled lines that match no entity (or
    an entity already labeled by an earlier line) are kept for audit.
    """
    if not raw.strip():
        raise NoParsableLines("output is empty")
    if cropped_boxes is not None and len(cropped_boxes) != doc.n_entities:
        raise LengthMismatch(
            f"{len(cropped_boxes)} cropped boxes for {doc.n_entities} entities"
        )

    parsed: list[tuple[str, tuple[int, int, int, int] | None, str]] = []
    matched_spans: list[str] = []
    for m in ENTITY_LINE_RE.finditer(raw):
        matched_spans.append(m.group(0))
        label = m.group(6)
        if label is None or not label.strip():
            continue  # question-form echo, not a prediction
        box = None
        if m.group(2) is not None:
            box = tuple(int(m.group(i)) for i in range(2, 6))
        parsed.append((unescape_text(m.group(1)).strip(), box, label.strip()))

    unmatched = [
        line for line in raw.splitlines() if "{" in line and not any(s in line for s in matched_spans)
    ]
    if not matched_spans:
        raise NoParsableLines("no line matches the entity-line grammar")

    by_text: dict[str, list[int]] = {}
    for idx, e in enumerate(doc.entities):
        by_text.setdefault(e.text.strip(), []).append(idx)

    labels: dict[str, str] = {}
    assigned: set[int] = set()

    def box_of(idx: int) -> tuple[tuple[int, ...], tuple[int, ...] | None]:
        original = tuple(doc.entities[idx].box.as_list())
        cropped = tuple(cropped_boxes[idx].as_list()) if cropped_boxes is not None else None
        return original, cropped

    for text, box, label in parsed:
        candidates = by_text.get(text, [])
        target: int | None = None
        if len(candidates) == 1:
            target = candidates[0]
        elif len(candidates) > 1:
            if box is not None:
                hits = [
                    i for i in candidates if box in box_of(i) and i not in assigned
                ]
                if len(hits) == 1:
                    target = hits[0]
            if target is None:
                free = [i for i in candidates if i not in assigned]
                target = free[0] if free else None
        if target is None or target in assigned:
            unmatched.append(f'{{text: "{text}", entity: {label}}}')
            continue
        assigned.add(target)
        labels[doc.entities[target].entity_id] = label

    return Prediction(doc_id=doc.doc_id, labels=labels, unmatched_output_lines=unmatched)


# --- metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    true_positives: int
    predicted_count: int
    gold_count: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, predicted: int, gold: int) -> "Metrics":
        precision = tp / predicted if predicted else 0.0
        recall = tp / gold if gold else 0.0
        # Harmonic mean written over the integer counts: exact when
        # predicted == gold, where precision, recall, and f1 must coincide.
        f1 = 2 * tp / (predicted + gold) if (predicted + gold) and tp else 0.0
        return cls(tp, predicted, gold, precision, recall, f1)


def _label_key(label: str, case_insensitive: bool) -> str:
    trimmed = label.strip()
    return trimmed.casefold() if case_insensitive else trimmed


def score_document(
    pred: Prediction,
    doc: Document,
    exclude_labels: Iterable[str] = (),
    case_insensitive: bool = True,
) -> Metrics:
    """Entity-level counts for one document.

    ``exclude_labels`` removes entities with those gold labels from all three
    counts (the optional FUNSD convention of ignoring "other").
    """
    excluded = {_label_key(l, case_insensitive) for l in exclude_labels}
    tp = predicted = gold = 0
    for e in doc.entities:
        if e.gold_label is None:
            raise MissingGold(f"document {doc.doc_id!r}: entity {e.entity_id!r} has no gold label")
        gold_key = _label_key(e.gold_label, case_insensitive)
        if gold_key in excluded:
            continue
        gold += 1
        pred_label = pred.labels.get(e.entity_id)
        if pred_label is None:
            continue
        predicted += 1
        if _label_key(pred_label, case_insensitive) == gold_key:
            tp += 1
    return Metrics.from_counts(tp, predicted, gold)


def aggregate(metrics: Iterable[Metrics]) -> Metrics:
    """Micro-average: sum the counts across documents, recompute the rates."""
    items = list(metrics)
    if not items:
        raise ValueError("aggregate needs at least one Metrics")
    return Metrics.from_counts(
        sum(m.true_positives for m in items),
        sum(m.predicted_count for m in items),
        sum(m.gold_count for m in items),
    )


# --- Wilcoxon signed-rank test -----------------------------------------------------


@dataclass(frozen=True)
class SignificanceResult:
    n_pairs: int
    n_nonzero: int
    w_statistic: float
    p_value: float
    method: str  # exact | normal_approx


EXACT_LIMIT = 25  # exact distribution up to this many nonzero differences


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_p(ranks: Sequence[float], w: float) -> float:
    """Two-sided p over all equally likely sign assignments of the given ranks.

    Average ranks are half-integers, so doubling makes every rank an integer
    and the positive-rank-sum distribution tabulates by counting.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled:
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    w2 = int(round(2 * w))
    below = sum(counts[: min(w2, total) + 1])
    p = 2.0 * below / (2 ** len(ranks))
    return min(1.0, p)


def _normal_p(ranks: Sequence[float], w: float) -> float:
    """Normal approximation with tie and continuity corrections."""
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    tie_term = 0.0
    seen: dict[float, int] = {}
    for r in ranks:
        seen[r] = seen.get(r, 0) + 1
    for count in seen.values():
        tie_term += count**3 - count
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    z = (w - mean + 0.5) / math.sqrt(variance)
    p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    return min(1.0, p)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped; |differences| are ranked with average ranks
    for ties; W is the smaller of the positive and negative rank sums. The
    p-value is exact (enumeration over sign assignments) for up to 25 nonzero
    differences, else a tie- and continuity-corrected normal approximation.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 5:
        raise ValueError(f"need at least 5 pairs, got {len(a)}")
    diffs = [x - y for x, y in zip(a, b)]
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = _average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for d, r in zip(nonzero, ranks) if d > 0)
    w_minus = sum(r for d, r in zip(nonzero, ranks) if d < 0)
    w = min(w_plus, w_minus)
    if len(nonzero) <= EXACT_LIMIT:
        method = "exact"
        p = _exact_p(ranks, w)
    else:
        method = "normal_approx"
        p = _normal_p(ranks, w)
    return SignificanceResult(
        n_pairs=len(a),
        n_nonzero=len(nonzero),
        w_statistic=float(w),
        p_value=p,
        method=method,
    )
