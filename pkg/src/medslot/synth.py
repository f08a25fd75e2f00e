"""Template-based synthetic discharge summaries with gold medication annotations.

Real i2b2/MIMIC text cannot be redistributed, so tests and demos run on these
documents. Everything is driven by one ``random.Random(seed)``: the same seed
always produces byte-identical files.
"""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ClinicalDocument, MedicationEvent, SlotSpan, format_annotation_line, segment_sentences
from .distmatch import PrescriptionRecord, write_records
from .fileio import atomic_write

DRUGS = {
    # name: (doses, unit, record form)
    "lasix": (["20", "40", "80"], "mg", "Tablet"),
    "tylenol": (["325", "650"], "mg", "Tablet"),
    "metoprolol": (["25", "50"], "mg", "Tablet"),
    "lisinopril": (["5", "10", "20"], "mg", "Tablet"),
    "coumadin": (["2", "5"], "mg", "Tablet"),
    "heparin": (["5000"], "units", "Syringe"),
    "insulin": (["10", "20"], "units", "Vial"),
    "aspirin": (["81", "325"], "mg", "Tablet"),
    "colace": (["100"], "mg", "Capsule"),
    "vancomycin": (["1", "2"], "g", "Bag"),
    "prednisone": (["10", "20", "40"], "mg", "Tablet"),
    "tacrolimus": (["1", "2"], "mg", "Capsule"),
    "plavix": (["75"], "mg", "Tablet"),
    "zantac": (["150"], "mg", "Tablet"),
}
ROUTES = {"po": "PO", "by mouth": "PO", "iv": "IV", "sc": "SC", "pr": "PR"}
FREQUENCIES = {
    "daily": "DAILY",
    "bid": "BID",
    "twice a day": "BID",
    "tid": "TID",
    "qhs": "QHS",
    "every 6 hours": "Q6H",
}
DURATIONS = ["3 days", "5 days", "7 days", "10 days", "2 weeks", "1 month"]
REASONS = ["pain", "hypertension", "fever", "constipation", "infection", "atrial fibrillation", "nausea"]

# "{m}" etc. are slot holes; everything else is literal text.
MED_TEMPLATES = [
    "{m} {do} {mo} {f}.",
    "Started {m} {do} {mo} {f} for {r}.",
    "{m} {do} {f} for {du}.",
    "Continue {m} {do} {mo} {f} for {du} for {r}.",
    "Patient was given {m} {do} {mo} for {r}.",
    "{m} {mo} as needed for {r}.",
    "Discharged on {m} {do} {f}.",
    "Take {m} {do} {mo} {f} for {du}.",
    "He received {m} {mo} for {du} for {r}.",
]
DOUBLE_TEMPLATE = "{m} {do} {mo} {f} and {m2} {do2} {f2}."
PLAIN_SENTENCES = [
    "Patient tolerated the procedure well.",
    "Vital signs were stable.",
    "She was in no acute distress.",
    "Follow up with primary care physician in 2 weeks.",
    "The patient ambulated without difficulty.",
    "Chest x-ray showed no acute process.",
    "Labs were notable for a mild anemia.",
    "He denied chest pain or shortness of breath.",
    "Diet was advanced as tolerated.",
]
FIRST_NAMES = ["john", "mary", "robert", "linda", "james", "susan", "david", "karen"]
LAST_NAMES = ["smith", "jones", "brown", "miller", "davis", "wilson", "moore", "taylor"]


@dataclass
class SynthDocument:
    document: ClinicalDocument
    events: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def doc_id(self):
        return self.document.doc_id


def _cap(rng, text):
    return text.capitalize() if rng.random() < 0.5 else text


class _Writer:
    """Accumulates document lines while tracking slot offsets."""

    def __init__(self):
        self.lines = []

    def blank(self):
        self.lines.append("")

    def text(self, line):
        self.lines.append(line)

    def sentence(self, template, values, rng, prefix="", wrap=False):
        """Write one templated sentence; return {hole: SlotSpan-like (value, start, end)}."""
        line_no = len(self.lines) + 1
        out = prefix
        spans = {}
        i = 0
        while i < len(template):
            if template[i] == "{":
                j = template.index("}", i)
                hole = template[i + 1 : j]
                value = values[hole]
                if wrap and hole == "f" and len(out) > 20:
                    # break the line before this slot so the sentence spans two lines
                    self.lines.append(out.rstrip())
                    line_no += 1
                    out = ""
                    wrap = False
                start = len(out)
                out += value
                spans[hole] = (value, (line_no, start), (line_no, start + len(value) - 1))
                i = j + 1
            else:
                out += template[i]
                i += 1
        self.lines.append(out)
        return spans


def _med_values(rng):
    drug = rng.choice(sorted(DRUGS))
    doses, unit, form = DRUGS[drug]
    dose_value = rng.choice(doses)
    route = rng.choice(sorted(ROUTES))
    freq = rng.choice(sorted(FREQUENCIES))
    values = {
        "m": _cap(rng, drug),
        "do": f"{dose_value} {unit}",
        "mo": route,
        "f": freq,
        "du": rng.choice(DURATIONS),
        "r": rng.choice(REASONS),
    }
    record = dict(
        drug=drug.capitalize(),
        dose_value=dose_value,
        dose_unit=unit,
        form=form,
        route=ROUTES[route],
        frequency=FREQUENCIES[freq],
    )
    return values, record


def _event(spans, holes):
    slot_of = {"m": "m", "do": "do", "mo": "mo", "f": "f", "du": "du", "r": "r"}
    entries = []
    for hole, label in slot_of.items():
        key = hole + holes
        if key in spans:
            value, start, end = spans[key]
            entries.append(SlotSpan(label, value, start, end))
    return MedicationEvent(entries)


def _med_sentence(writer, rng, doc_id, prefix="", allow_wrap=True):
    """Write a medication sentence; returns (events, records)."""
    if rng.random() < 0.12:
        v1, r1 = _med_values(rng)
        v2, r2 = _med_values(rng)
        values = dict(v1)
        values.update({k + "2": v for k, v in v2.items()})
        spans = writer.sentence(DOUBLE_TEMPLATE, values, rng, prefix)
        events = [_event(spans, ""), _event(spans, "2")]
        return events, [_blank_missing(r1, spans, ""), _blank_missing(r2, spans, "2")]
    template = rng.choice(MED_TEMPLATES)
    values, record = _med_values(rng)
    wrap = allow_wrap and rng.random() < 0.2
    spans = writer.sentence(template, values, rng, prefix, wrap=wrap)
    return [_event(spans, "")], [_blank_missing(record, spans, "")]


def _blank_missing(record, spans, suffix):
    """Clear record fields the sentence does not mention."""
    if "do" + suffix not in spans:
        record["dose_value"] = record["dose_unit"] = ""
    if "mo" + suffix not in spans:
        record["route"] = ""
    if "f" + suffix not in spans:
        record["frequency"] = ""
    return record


def generate_document(doc_id, rng):
    writer = _Writer()
    events = []
    records = []
    writer.text("DISCHARGE SUMMARY")
    writer.text(f"Patient: {rng.choice(FIRST_NAMES).title()} {rng.choice(LAST_NAMES).title()}")
    writer.blank()
    writer.text("HOSPITAL COURSE:")
    for _ in range(rng.randint(2, 4)):
        if rng.random() < 0.55:
            ev, rec = _med_sentence(writer, rng, doc_id)
            events += ev
            records += rec
        else:
            writer.text(rng.choice(PLAIN_SENTENCES))
    writer.blank()
    writer.text("DISCHARGE MEDICATIONS:")
    for k in range(1, rng.randint(2, 4) + 1):
        ev, rec = _med_sentence(writer, rng, doc_id, prefix=f"{k}. ", allow_wrap=False)
        events += ev
        records += rec
    writer.blank()
    writer.text(rng.choice(PLAIN_SENTENCES))
    doc = ClinicalDocument(doc_id, writer.lines)
    prescriptions = [PrescriptionRecord(patient_id=doc_id, **r) for r in records]
    return SynthDocument(doc, events, prescriptions)


def generate_corpus(num_docs, seed=0, prefix="doc"):
    if num_docs < 1:
        raise ValueError("num_docs must be >= 1")
    rng = random.Random(seed)
    width = max(4, len(str(num_docs)))
    return [generate_document(f"{prefix}{i:0{width}d}", rng) for i in range(num_docs)]


def annotation_text(doc):
    lines = []
    for event in doc.events:
        present = {s.label for s in event.entries}
        line = format_annotation_line(event)
        missing = [f'{label}="nm"' for label in ("m", "do", "mo", "f", "du", "r") if label not in present]
        lines.append("||".join([line, *missing]) if missing else line)
    return "\n".join(lines) + ("\n" if lines else "")


def write_corpus(docs, out_dir):
    """Write ``docs/``, ``annotations/``, ``rx.csv`` and ``notes.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    for doc in docs:
        with atomic_write(out / "docs" / f"{doc.doc_id}.txt") as fh:
            fh.write("\n".join(doc.document.lines))
        with atomic_write(out / "annotations" / f"{doc.doc_id}.ann") as fh:
            fh.write(annotation_text(doc))
    with atomic_write(out / "rx.csv") as fh:
        write_records(fh, [r for doc in docs for r in doc.records])
    with atomic_write(out / "notes.jsonl") as fh:
        for doc in docs:
            for sent in segment_sentences(doc.document):
                fh.write(json.dumps({"patient_id": doc.doc_id, "sentence": sent.tokens}) + "\n")
    return out


def synthetic_pairs(num_docs, seed=0, medication_only=False):
    """Convenience: generate documents and convert them to sentence pairs in memory."""
    from .corpus import align_events_to_sentences

    pairs = []
    for doc in generate_corpus(num_docs, seed):
        pairs.extend(align_events_to_sentences(doc.document, doc.events))
    if medication_only:
        pairs = [p for p in pairs if p.target]
    return pairs
