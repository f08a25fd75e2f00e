import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from medslot.corpus import (
    SLOT_LABELS,
    ClinicalDocument,
    MedicationEvent,
    SentencePair,
    SlotFrame,
    SlotSpan,
    align_events_to_sentences,
    convert_corpus,
    linearize_frame,
    parse_annotation_file,
    parse_linearized,
    read_document,
    segment_sentences,
    tokenize,
)
from medslot.errors import LinearizationError, MalformedEntry, MedslotError, OffsetOrderError, OffsetOutOfRange

DATA = Path(__file__).parent / "data"


def doc(*lines, doc_id="d"):
    return ClinicalDocument(doc_id, list(lines))


# -- tokenization ------------------------------------------------------------


def test_tokenize_keeps_glued_units():
    assert tokenize("Lasix 20mg PO.") == ["lasix", "20mg", "po", "."]
    assert tokenize("take 0.5 tab") == ["take", "0.5", "tab"]
    assert tokenize("q6h, b.i.d") == ["q6h", ",", "b", ".", "i", ".", "d"]


# -- annotation grammar ------------------------------------------------------


def test_parse_three_slot_event():
    text = 'm="tylenol" 10:2 10:8||do="650 mg" 10:12 10:17||mo="po" 10:20 10:21'
    (event,) = parse_annotation_file(text)
    assert [(s.label, s.value, s.start, s.end) for s in event.entries] == [
        ("m", "tylenol", (10, 2), (10, 8)),
        ("do", "650 mg", (10, 12), (10, 17)),
        ("mo", "po", (10, 20), (10, 21)),
    ]


def test_nm_entries_dropped():
    (event,) = parse_annotation_file('m="lasix" 4:0 4:4||du="nm"||r="nm"')
    assert [s.label for s in event.entries] == ["m"]


def test_missing_quotes_is_malformed():
    with pytest.raises(MalformedEntry) as err:
        parse_annotation_file('m="a" 1:0 1:0\nm=missing-quotes 3:0 3:6')
    assert err.value.line_no == 2


@pytest.mark.parametrize(
    "line",
    ['x="foo" 1:0 1:2', 'm="lasix"', 'm="" 1:0 1:1', 'm="a" 1:0'],
)
def test_other_grammar_violations(line):
    with pytest.raises(MalformedEntry):
        parse_annotation_file(line)


def test_start_after_end():
    with pytest.raises(OffsetOrderError):
        parse_annotation_file('m="a" 3:5 3:1')


def test_ln_flag_ignored_and_blank_lines_skipped():
    events = parse_annotation_file('\nm="a" 1:0 1:0||ln="list"\n\n')
    assert len(events) == 1 and [s.label for s in events[0].entries] == ["m"]


# -- segmentation ------------------------------------------------------------


def test_terminal_punctuation_splits_lines():
    sents = segment_sentences(doc("Tylenol 650 mg po.", "Lasix 20 mg daily."))
    assert [s.tokens for s in sents] == [
        ["tylenol", "650", "mg", "po", "."],
        ["lasix", "20", "mg", "daily", "."],
    ]


def test_abbreviation_guard():
    sents = segment_sentences(doc("Dr. Smith started Lasix 20 mg."))
    assert len(sents) == 1


def test_ten_line_golden():
    d = read_document(DATA / "segment_10line.txt")
    expected = json.loads((DATA / "segment_10line.expected.json").read_text())
    got = [{"index": s.index, "line_span": list(s.line_span), "tokens": s.tokens} for s in segment_sentences(d)]
    assert got == expected


def test_empty_document():
    assert segment_sentences(doc()) == []
    assert segment_sentences(doc("", "   ")) == []


def test_list_items_and_headers():
    sents = segment_sentences(doc("MEDS:", "1. aspirin 81 mg", "2. lasix 20 mg", "- colace"))
    assert [s.tokens[:2] for s in sents] == [["meds", ":"], ["1", "."], ["2", "."], ["-", "colace"]]


_line = st.text(alphabet=st.sampled_from(list("abc xyz.12:-\t")), max_size=30)


@given(st.lists(_line, max_size=8))
def test_segmentation_covers_every_token_once(lines):
    d = doc(*lines)
    sents = segment_sentences(d)
    joined = [t for s in sents for t in s.tokens]
    assert joined == tokenize(" ".join(lines))
    assert all(s.tokens for s in sents)
    assert [s.index for s in sents] == list(range(len(sents)))
    assert segment_sentences(d) == sents


# -- alignment ---------------------------------------------------------------


def test_single_sentence_alignment():
    d = doc("tylenol 650 mg po")
    event = MedicationEvent([SlotSpan("m", "tylenol", (1, 0), (1, 6)), SlotSpan("do", "650 mg", (1, 8), (1, 13))])
    (pair,) = align_events_to_sentences(d, [event])
    assert pair.target == SlotFrame((("m", "tylenol"), ("do", "650 mg")))


def test_event_spanning_boundary_uses_start_offsets():
    d = doc("Started lasix.", "Give it daily.")
    event = MedicationEvent([SlotSpan("m", "lasix", (1, 8), (1, 12)), SlotSpan("f", "daily", (2, 8), (2, 12))])
    p1, p2 = align_events_to_sentences(d, [event])
    assert p1.target == SlotFrame((("m", "lasix"),))
    assert p2.target == SlotFrame((("f", "daily"),))


@pytest.mark.parametrize("start", [(3, 0), (1, 40), (0, 0)])
def test_offset_out_of_range(start):
    d = doc("lasix 20 mg", "daily")
    event = MedicationEvent([SlotSpan("m", "lasix", start, start)])
    with pytest.raises(OffsetOutOfRange):
        align_events_to_sentences(d, [event])


def test_three_document_golden():
    root = DATA / "align"
    got = [p.to_json() for p in convert_corpus(root / "docs", root / "annotations")]
    expected = [json.loads(line) for line in (root / "expected_pairs.jsonl").read_text().splitlines()]
    assert got == expected


def test_slot_entry_conservation():
    root = DATA / "align"
    pairs = convert_corpus(root / "docs", root / "annotations")
    n_entries = sum(len(p.target) for p in pairs)
    n_events = sum(
        len(e.entries)
        for f in sorted((root / "annotations").glob("*.ann"))
        for e in parse_annotation_file(f.read_text())
    )
    assert n_entries == n_events


def test_convert_reports_file_on_bad_annotation(tmp_path):
    (tmp_path / "docs").mkdir()
    (tmp_path / "ann").mkdir()
    (tmp_path / "docs" / "x.txt").write_text("lasix 20 mg\n")
    (tmp_path / "ann" / "x.ann").write_text("garbage\n")
    with pytest.raises(MalformedEntry, match="x.ann"):
        convert_corpus(tmp_path / "docs", tmp_path / "ann")


# -- linearization -----------------------------------------------------------


def test_linearize_examples():
    assert linearize_frame(SlotFrame((("m", "tylenol"), ("do", "650 mg")))) == "m= tylenol ; do= 650 mg".split()
    assert linearize_frame(SlotFrame()) == ["<empty>"]
    assert linearize_frame(SlotFrame((("r", "pain"), ("m", "tylenol"))))[0] == "m="


_value = st.lists(st.sampled_from(["lasix", "20", "mg", "po", "a", "b.i.d", "x-ray"]), min_size=1, max_size=3).map(" ".join)
_frames = st.lists(st.tuples(st.sampled_from(SLOT_LABELS), _value), max_size=6).map(lambda e: SlotFrame(tuple(e)))


@given(_frames)
def test_linearize_round_trip(frame):
    assert parse_linearized(linearize_frame(frame)) == frame


@pytest.mark.parametrize(
    "tokens",
    [[], ["lasix"], ["m=", "a", "do=", "b"], ["m=", "a", ";", "<empty>"], ["m=", "a", ";"]],
)
def test_strict_parse_rejects(tokens):
    with pytest.raises(LinearizationError):
        parse_linearized(tokens)


def test_lenient_parse_of_model_output():
    frame = parse_linearized(["junk", "m=", "lasix", "do=", "20", "mg", ";", ";", "f="], strict=False)
    assert frame == SlotFrame((("m", "lasix"), ("do", "20 mg")))


def test_frame_canonical_order_and_equality():
    a = SlotFrame((("r", "pain"), ("m", "b"), ("m", "a")))
    assert a.entries == (("m", "a"), ("m", "b"), ("r", "pain"))
    assert a == SlotFrame.from_dict({"m": ["b", "a"], "r": "pain"})


def test_frame_rejects_bad_entries():
    with pytest.raises(ValueError):
        SlotFrame((("zz", "x"),))
    with pytest.raises(ValueError):
        SlotFrame((("m", "  "),))


def test_pair_json_round_trip_and_errors():
    pair = SentencePair("d1", 3, ("lasix", "20", "mg"), SlotFrame((("m", "lasix"),)))
    assert SentencePair.from_json(pair.to_json()) == pair
    with pytest.raises(MedslotError):
        SentencePair.from_json({"doc_id": "d", "sentence_index": 0, "src": [], "tgt": ["<empty>"]})
    with pytest.raises(MedslotError):
        SentencePair.from_json({"doc_id": "d", "src": ["a"], "tgt": ["<empty>"]})
