"""Per-slot precision / recall / F1 for predicted frames against reference frames."""

import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .corpus import SLOT_LABELS
from .errors import AlignmentError

_EDGE_PUNCT_RE = re.compile(r"^[^\w]+|[^\w]+$")


def normalize_value(text):
    """Lowercase, collapse whitespace, strip leading/trailing punctuation."""
    text = " ".join(text.lower().split())
    return _EDGE_PUNCT_RE.sub("", text).strip()


@dataclass
class SlotCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def support(self):
        return self.tp + self.fp + self.fn


@dataclass
class SlotScore:
    """tp/fp/fn accumulator for each slot label."""

    counts: dict = field(default_factory=lambda: {label: SlotCounts() for label in SLOT_LABELS})

    def __getitem__(self, label):
        return self.counts[label]

    def merge(self, other):
        out = SlotScore()
        for label in SLOT_LABELS:
            a, b = self.counts[label], other.counts[label]
            out.counts[label] = SlotCounts(a.tp + b.tp, a.fp + b.fp, a.fn + b.fn)
        return out


def _bag(frame, label):
    return Counter(normalize_value(v) for lab, v in frame if lab == label)


def score_pair(predicted, reference, scores=None):
    """Add one sentence's multiset matches to ``scores`` (created if None)."""
    scores = SlotScore() if scores is None else scores
    for label in SLOT_LABELS:
        pred, ref = _bag(predicted, label), _bag(reference, label)
        tp = sum((pred & ref).values())
        c = scores.counts[label]
        c.tp += tp
        c.fp += sum(pred.values()) - tp
        c.fn += sum(ref.values()) - tp
    return scores


def round_half_up(x, places=2):
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


def macro_f1(per_slot_f1, support=None):
    """Unweighted mean of per-slot F1, skipping slots with zero support.

    ``support`` maps label -> count; when omitted every given slot counts.
    """
    labels = [lab for lab in per_slot_f1 if support is None or support.get(lab, 0) > 0]
    if not labels:
        return 0.0
    return sum(per_slot_f1[lab] for lab in labels) / len(labels)


@dataclass
class EvalReport:
    scores: SlotScore
    num_pairs: int

    def per_slot(self):
        return {
            label: {
                "p": c.precision,
                "r": c.recall,
                "f1": c.f1,
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
            }
            for label, c in self.scores.counts.items()
        }

    @property
    def macro_f1(self):
        counts = self.scores.counts
        return macro_f1(
            {lab: c.f1 for lab, c in counts.items()},
            {lab: c.support for lab, c in counts.items()},
        )

    def to_json(self):
        out = {label: {k: v for k, v in s.items()} for label, s in self.per_slot().items()}
        out["macro_f1"] = self.macro_f1
        out["num_pairs"] = self.num_pairs
        return out

    def table(self, name="model"):
        """Text table with the column layout F1, m, do, mo, f, du, r."""
        headers = ["Model", "F1", *SLOT_LABELS]
        cells = [name, f"{round_half_up(self.macro_f1):.2f}"]
        for label in SLOT_LABELS:
            c = self.scores.counts[label]
            cells.append(f"{round_half_up(c.f1):.2f}" if c.support else "-")
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        fmt = " | ".join(f"{{:>{w}}}" for w in widths)
        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt.format(*headers), rule, fmt.format(*cells)])


def evaluate(predictions, references):
    """Score prediction pairs against reference pairs matched on (doc_id, sentence_index)."""
    pred_by_key = {}
    for p in predictions:
        pred_by_key[p.key] = p
    ref_by_key = {}
    for r in references:
        ref_by_key[r.key] = r
    missing_pred = set(ref_by_key) - set(pred_by_key)
    missing_ref = set(pred_by_key) - set(ref_by_key)
    if missing_pred or missing_ref:
        raise AlignmentError(missing_pred, missing_ref)
    scores = SlotScore()
    for key in sorted(ref_by_key):
        score_pair(pred_by_key[key].target, ref_by_key[key].target, scores)
    return EvalReport(scores, len(ref_by_key))


def evaluate_frames(predicted_frames, reference_frames):
    """Score two equally long lists of frames position by position."""
    if len(predicted_frames) != len(reference_frames):
        raise ValueError("frame lists differ in length")
    scores = SlotScore()
    for pred, ref in zip(predicted_frames, reference_frames):
        score_pair(pred, ref, scores)
    return EvalReport(scores, len(reference_frames))
