"""Distant supervision: pair prescription rows with the note sentence describing them.

Each field of a prescription record (drug, dose, form, route, frequency) is
turned into a token-anchored regular expression. A sentence earns one point per
field it matches; for every record the best sentence of the same patient is
kept when it reaches ``min_score``.
"""

import csv
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .corpus import SentencePair, SlotFrame, canonical_value, tokenize
from .errors import MedslotError

SCORED_FIELDS = ("drug", "dose", "form", "route", "frequency")
FIELD_TO_SLOT = {"drug": "m", "dose": "do", "route": "mo", "frequency": "f"}
RECORD_COLUMNS = ("patient_id", "drug", "dose_value", "dose_unit", "form", "route", "frequency")


@dataclass(frozen=True)
class PrescriptionRecord:
    patient_id: str
    drug: str
    dose_value: str = ""
    dose_unit: str = ""
    form: str = ""
    route: str = ""
    frequency: str = ""

    def __post_init__(self):
        if not self.patient_id.strip() or not self.drug.strip():
            raise ValueError("patient_id and drug must be non-empty")

    @property
    def dose(self):
        return " ".join(p for p in (self.dose_value.strip(), self.dose_unit.strip()) if p)

    def field_text(self, name):
        return self.dose if name == "dose" else getattr(self, name)


@dataclass(frozen=True)
class MatchResult:
    record: PrescriptionRecord
    sentence: tuple
    score: int
    matched_fields: frozenset
    sentence_index: int = 0


@lru_cache(maxsize=None)
def load_synonyms(version=1):
    """Synonym groups keyed by field, as ``{field: {phrase: group}}``."""
    text = resources.files("medslot").joinpath(f"data/synonyms_v{version}.json").read_text("utf-8")
    raw = json.loads(text)
    table = {}
    for name, groups in raw.items():
        if name == "version":
            continue
        index = {}
        for group in groups:
            canon = tuple(dict.fromkeys(canonical_value(p) for p in group))
            for phrase in canon:
                index[phrase] = canon
        table[name] = index
    return table


def _variants(name, text, synonyms):
    text = canonical_value(text)
    if not text:
        return ()
    return synonyms.get(name, {}).get(text, (text,))


def field_phrases(record, name, synonyms=None):
    """All token phrases that count as a mention of ``record``'s field ``name``."""
    synonyms = load_synonyms() if synonyms is None else synonyms
    if name != "dose":
        return _variants(name, record.field_text(name), synonyms)
    value = record.dose_value.strip()
    if not value:
        return ()
    units = _variants("dose_unit", record.dose_unit, synonyms) or ("",)
    phrases = []
    for unit in units:
        for raw in (f"{value} {unit}", f"{value}{unit.replace(' ', '')}"):
            phrase = canonical_value(raw)
            if phrase and phrase not in phrases:
                phrases.append(phrase)
    return tuple(phrases)


@lru_cache(maxsize=4096)
def _pattern(phrases):
    alternatives = "|".join(re.escape(p) for p in sorted(phrases, key=len, reverse=True))
    return re.compile(rf"(?:^| )(?:{alternatives})(?= |$)")


def score_sentence(record, sentence, synonyms=None):
    """Return ``(score, matched_fields)`` for one record against one token list."""
    synonyms = load_synonyms() if synonyms is None else synonyms
    text = " ".join(t.lower() for t in sentence)
    matched = set()
    for name in SCORED_FIELDS:
        phrases = field_phrases(record, name, synonyms)
        if phrases and _pattern(phrases).search(text):
            matched.add(name)
    return len(matched), frozenset(matched)


def match_patient(records, sentences, min_score=2, synonyms=None):
    """Pick, per record, the best-scoring sentence (earliest on ties)."""
    if min_score < 1:
        raise ValueError("min_score must be >= 1")
    ids = {r.patient_id for r in records}
    if len(ids) > 1:
        raise ValueError(f"records span several patients: {sorted(ids)}")
    results = []
    for record in records:
        best = None
        for idx, sentence in enumerate(sentences):
            score, fields = score_sentence(record, sentence, synonyms)
            if best is None or score > best[0]:
                best = (score, fields, idx)
        if best is None or best[0] < min_score:
            continue
        score, fields, idx = best
        results.append(MatchResult(record, tuple(sentences[idx]), score, fields, idx))
    return results


def result_frame(result):
    entries = []
    for name in sorted(result.matched_fields, key=SCORED_FIELDS.index):
        label = FIELD_TO_SLOT.get(name)
        value = canonical_value(result.record.field_text(name))
        if label and value:
            entries.append((label, value))
    return SlotFrame(tuple(entries))


def filter_corpus(results, max_src_len=100, dedup=True):
    """Drop over-long sentences and exact duplicates; convert to sentence pairs."""
    if max_src_len < 1:
        raise ValueError("max_src_len must be >= 1")
    pairs = []
    seen = set()
    for result in results:
        if not result.sentence or len(result.sentence) > max_src_len:
            continue
        frame = result_frame(result)
        key = (tuple(result.sentence), frame)
        if dedup:
            if key in seen:
                continue
            seen.add(key)
        pairs.append(
            SentencePair(result.record.patient_id, result.sentence_index, result.sentence, frame)
        )
    return pairs


def match_corpus(records, notes, min_score=2, synonyms=None):
    """Run :func:`match_patient` for every patient; ``notes`` maps patient id to sentences."""
    by_patient = {}
    for record in records:
        by_patient.setdefault(record.patient_id, []).append(record)
    results = []
    for patient_id in sorted(by_patient):
        results.extend(
            match_patient(by_patient[patient_id], notes.get(patient_id, []), min_score, synonyms)
        )
    return results


def read_records(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MedslotError(f"{path}: missing columns {sorted(missing)}")
        records = []
        for row_no, row in enumerate(reader, 2):
            try:
                records.append(PrescriptionRecord(**{c: (row[c] or "") for c in RECORD_COLUMNS}))
            except ValueError as exc:
                raise MedslotError(f"{path}:{row_no}: {exc}") from None
    return records


def write_records(fh, records):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for r in records:
        writer.writerow([getattr(r, c) for c in RECORD_COLUMNS])


def notes_from_rows(rows):
    notes = {}
    for row in rows:
        try:
            sentence = row["sentence"]
            if isinstance(sentence, str):
                sentence = tokenize(sentence)
            notes.setdefault(str(row["patient_id"]), []).append(list(sentence))
        except (KeyError, TypeError):
            raise MedslotError(f"bad note row: {row!r}") from None
    return notes
