"""Clinical documents, standoff medication annotations and sentence/frame pairs.

A document is a list of raw lines. Annotations locate each slot value by
``line:char`` offsets (1-based line, 0-based char, end inclusive). Converting a
document yields one :class:`SentencePair` per sentence, whose target is an
*unaligned* :class:`SlotFrame`: the slot values are kept, their positions are
not.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import (
    LinearizationError,
    MalformedEntry,
    MedslotError,
    OffsetOrderError,
    OffsetOutOfRange,
)

SLOT_LABELS = ("m", "do", "mo", "f", "du", "r")
SLOT_NAMES = {
    "m": "medication",
    "do": "dose",
    "mo": "mode",
    "f": "frequency",
    "du": "duration",
    "r": "reason",
}
_LABEL_RANK = {label: i for i, label in enumerate(SLOT_LABELS)}

DELIMITER = ";"
EMPTY_TOKEN = "<empty>"
LABEL_TOKENS = {f"{label}=": label for label in SLOT_LABELS}
PROTECTED_TOKENS = frozenset([DELIMITER, EMPTY_TOKEN, *LABEL_TOKENS])

# numbers with glued units ("20mg", "0.5", "1/2") | alphanumeric runs | any other single char
_TOKEN_RE = re.compile(r"\d+(?:[.,/:]\d+)*[^\W\d_]*|[^\W_]+|\S")


def tokenize(text):
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


def canonical_value(text):
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class SlotFrame:
    """Unordered multiset of (slot label, value) entries.

    Entries are stored sorted by canonical label order, then by value, so two
    frames with the same content compare equal.
    """

    entries: tuple = ()

    def __post_init__(self):
        cleaned = []
        for label, value in self.entries:
            if label not in _LABEL_RANK:
                raise ValueError(f"unknown slot label {label!r}")
            value = value.strip()
            if not value:
                raise ValueError(f"empty value for slot {label!r}")
            cleaned.append((label, value))
        cleaned.sort(key=lambda e: (_LABEL_RANK[e[0]], e[1]))
        object.__setattr__(self, "entries", tuple(cleaned))

    @classmethod
    def from_dict(cls, mapping):
        entries = []
        for label, value in mapping.items():
            values = [value] if isinstance(value, str) else value
            entries.extend((label, v) for v in values)
        return cls(tuple(entries))

    def values(self, label):
        return [v for lab, v in self.entries if lab == label]

    def labels(self):
        return [lab for lab, _ in self.entries]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __bool__(self):
        return bool(self.entries)


@dataclass(frozen=True)
class SlotSpan:
    label: str
    value: str
    start: tuple
    end: tuple


@dataclass
class MedicationEvent:
    entries: list = field(default_factory=list)

    def slot(self, label):
        for span in self.entries:
            if span.label == label:
                return span
        return None


@dataclass
class ClinicalDocument:
    doc_id: str
    lines: list

    @classmethod
    def from_text(cls, doc_id, text):
        return cls(doc_id, text.split("\n"))


@dataclass(frozen=True)
class SentencePair:
    doc_id: str
    sentence_index: int
    source_tokens: tuple
    target: SlotFrame

    def __post_init__(self):
        if not self.source_tokens:
            raise ValueError("source_tokens must be non-empty")
        object.__setattr__(self, "source_tokens", tuple(self.source_tokens))

    @property
    def key(self):
        return (self.doc_id, self.sentence_index)

    def to_json(self):
        return {
            "doc_id": self.doc_id,
            "sentence_index": self.sentence_index,
            "src": list(self.source_tokens),
            "tgt": linearize_frame(self.target),
        }

    @classmethod
    def from_json(cls, obj, strict=True):
        try:
            frame = parse_linearized(obj["tgt"], strict=strict)
            return cls(str(obj["doc_id"]), int(obj["sentence_index"]), obj["src"], frame)
        except (KeyError, TypeError, ValueError) as exc:
            raise MedslotError(f"bad pair record: {exc}") from None


# -- annotation files --------------------------------------------------------

_ENTRY_RE = re.compile(r'^\s*([a-z]+)="(.*)"(?:\s+(\d+):(\d+)\s+(\d+):(\d+))?\s*$')
_IGNORED_LABELS = {"ln"}  # list/narrative flag found in i2b2 entry files


def parse_annotation_file(text):
    """Parse ``label="value" L:C L:C||...`` lines into medication events.

    Entries whose value is ``nm`` (not mentioned) are dropped. Blank lines are
    skipped but still count for error line numbers.
    """
    events = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        event = MedicationEvent()
        for raw in line.split("||"):
            m = _ENTRY_RE.match(raw)
            if m is None:
                raise MalformedEntry(line_no, f"cannot parse entry {raw.strip()!r}")
            label, value = m.group(1), m.group(2)
            if label in _IGNORED_LABELS:
                continue
            if label not in _LABEL_RANK:
                raise MalformedEntry(line_no, f"unknown slot label {label!r}")
            if value == "nm":
                continue
            if not value.strip():
                raise MalformedEntry(line_no, f"empty value for {label!r}")
            if m.group(3) is None:
                raise MalformedEntry(line_no, f"missing offsets for {label}={value!r}")
            start = (int(m.group(3)), int(m.group(4)))
            end = (int(m.group(5)), int(m.group(6)))
            if start > end:
                raise OffsetOrderError(f"line {line_no}: {label} start {start} after end {end}")
            event.entries.append(SlotSpan(label, value, start, end))
        events.append(event)
    return events


def format_annotation_line(event):
    parts = [
        f'{s.label}="{s.value}" {s.start[0]}:{s.start[1]} {s.end[0]}:{s.end[1]}'
        for s in event.entries
    ]
    return "||".join(parts)


# -- sentence segmentation ---------------------------------------------------

ABBREVIATIONS = frozenset(
    """
    dr mr mrs ms st sr jr prof vs e.g i.e approx no pt pts
    p.o b.i.d t.i.d q.i.d q.d q.h.s h.s p.r.n q.o.d a.m p.m
    tab tabs cap caps inj fig
    """.split()
)
_LIST_MARKER_RE = re.compile(r"^\s*(?:\d{1,3}[.)]|[-*•])\s+")
_TERMINAL_RE = re.compile(r"[.!?]+(?=\s|$)")
_WORD_BEFORE_RE = re.compile(r"([A-Za-z0-9.]*[A-Za-z0-9])$")


class Sentence(NamedTuple):
    index: int
    line_span: tuple
    tokens: list
    spans: list  # (line_no, char_start, char_end_exclusive) pieces


def _is_abbreviation(text_before):
    m = _WORD_BEFORE_RE.search(text_before)
    if m is None:
        return False
    word = m.group(1).lower()
    return word in ABBREVIATIONS or (len(word) == 1 and word.isalpha())


def _trimmed_piece(line_no, line, a, b):
    seg = line[a:b]
    stripped = seg.strip()
    if not stripped:
        return None
    lead = len(seg) - len(seg.lstrip())
    return (line_no, a + lead, a + lead + len(stripped))


def segment_sentences(doc):
    """Rule-based clinical sentence splitter.

    Boundaries: terminal punctuation followed by whitespace (unless the word
    before it is a guarded abbreviation or a single letter), blank lines,
    list-item lines and section-header lines ending in a colon. Lines without
    a boundary continue the current sentence.
    """
    sentences = []
    pieces = []

    def close():
        if not pieces:
            return
        text = " ".join(doc.lines[ln - 1][a:b] for ln, a, b in pieces)
        sentences.append(
            Sentence(len(sentences), (pieces[0][0], pieces[-1][0]), tokenize(text), list(pieces))
        )
        pieces.clear()

    for line_no, line in enumerate(doc.lines, 1):
        if not line.strip():
            close()
            continue
        scan_from = 0
        marker = _LIST_MARKER_RE.match(line)
        if marker:
            close()
            scan_from = marker.end()
        seg_start = 0
        for m in _TERMINAL_RE.finditer(line, scan_from):
            if m.group().startswith(".") and len(m.group()) == 1 and _is_abbreviation(line[: m.start()]):
                continue
            piece = _trimmed_piece(line_no, line, seg_start, m.end())
            if piece:
                pieces.append(piece)
            close()
            seg_start = m.end()
        piece = _trimmed_piece(line_no, line, seg_start, len(line))
        if piece:
            pieces.append(piece)
        if line.rstrip().endswith(":"):
            close()
    close()
    return sentences


# -- alignment ---------------------------------------------------------------


def _check_offset(doc, offset, what):
    line, char = offset
    if not 1 <= line <= len(doc.lines):
        raise OffsetOutOfRange(
            f"{doc.doc_id}: {what} line {line} outside 1..{len(doc.lines)}"
        )
    if not 0 <= char < len(doc.lines[line - 1]):
        raise OffsetOutOfRange(
            f"{doc.doc_id}: {what} char {char} outside line {line} "
            f"(length {len(doc.lines[line - 1])})"
        )


def _sentence_for(sentences, offset):
    line, char = offset
    best = None
    for sent in sentences:
        for ln, a, b in sent.spans:
            if ln == line and a <= char < b:
                return sent.index
        if (sent.spans[0][0], sent.spans[0][1]) <= offset:
            best = sent.index
    return 0 if best is None else best


def align_events_to_sentences(doc, events, sentences=None):
    """Attach every slot entry to the sentence containing its start offset.

    Returns one pair per sentence; offsets are dropped from the output.
    """
    if sentences is None:
        sentences = segment_sentences(doc)
    buckets = [[] for _ in sentences]
    for event in events:
        for span in event.entries:
            _check_offset(doc, span.start, f"{span.label} start")
            _check_offset(doc, span.end, f"{span.label} end")
            if not sentences:
                raise OffsetOutOfRange(f"{doc.doc_id}: annotation on a document with no text")
            value = canonical_value(span.value)
            if not value:
                continue
            buckets[_sentence_for(sentences, span.start)].append((span.label, value))
    return [
        SentencePair(doc.doc_id, sent.index, sent.tokens, SlotFrame(tuple(bucket)))
        for sent, bucket in zip(sentences, buckets)
    ]


# -- linearization -----------------------------------------------------------


def linearize_frame(frame):
    """``m= tylenol ; do= 650 mg`` style token list; ``<empty>`` for no entries."""
    if not frame:
        return [EMPTY_TOKEN]
    tokens = []
    for i, (label, value) in enumerate(frame):
        if i:
            tokens.append(DELIMITER)
        tokens.append(f"{label}=")
        tokens.extend(value.split())
    return tokens


def parse_linearized(tokens, strict=True):
    """Inverse of :func:`linearize_frame`.

    With ``strict=False`` (used on model output) stray tokens before the first
    label, empty groups and ``<empty>`` markers are ignored instead of raising.
    """
    tokens = list(tokens)
    if tokens == [EMPTY_TOKEN]:
        return SlotFrame()
    if strict and not tokens:
        raise LinearizationError("empty token sequence")
    groups = []
    current = None
    delimited = False  # a ';' has been seen since the current group started
    for tok in tokens:
        if tok in LABEL_TOKENS:
            if current is not None:
                if not delimited and strict:
                    raise LinearizationError(f"missing delimiter before {tok!r}")
                groups.append(current)
            current = (LABEL_TOKENS[tok], [])
            delimited = False
        elif tok == DELIMITER:
            if strict and (current is None or delimited):
                raise LinearizationError("delimiter without a preceding slot group")
            delimited = True
        elif tok == EMPTY_TOKEN:
            if strict:
                raise LinearizationError("<empty> marker inside a non-empty frame")
        elif current is None:
            if strict:
                raise LinearizationError(f"value token {tok!r} before any slot label")
        elif delimited:
            if strict:
                raise LinearizationError(f"value token {tok!r} after a delimiter")
        else:
            current[1].append(tok)
    if current is not None:
        if delimited and strict:
            raise LinearizationError("frame ends with a delimiter")
        groups.append(current)
    entries = []
    for label, value_tokens in groups:
        if not value_tokens:
            if strict:
                raise LinearizationError(f"slot {label!r} has no value")
            continue
        entries.append((label, " ".join(value_tokens)))
    return SlotFrame(tuple(entries))


# -- directory conversion ----------------------------------------------------


def read_document(path):
    path = Path(path)
    return ClinicalDocument.from_text(path.stem, path.read_text(encoding="utf-8"))


def convert_corpus(docs_dir, annotations_dir, ann_suffix=".ann"):
    """Convert every ``*.txt`` document (plus matching annotation file) to pairs.

    A document without an annotation file gets empty frames throughout.
    """
    pairs = []
    for doc_path in sorted(Path(docs_dir).glob("*.txt")):
        doc = read_document(doc_path)
        ann_path = Path(annotations_dir) / f"{doc.doc_id}{ann_suffix}"
        events = []
        if ann_path.exists():
            try:
                events = parse_annotation_file(ann_path.read_text(encoding="utf-8"))
            except MalformedEntry as exc:
                raise MalformedEntry(exc.line_no, f"{ann_path.name}: {exc.reason}") from None
        pairs.extend(align_events_to_sentences(doc, events))
    return pairs
