from collections import Counter

import pytest

from medslot.corpus import SLOT_LABELS, convert_corpus, parse_annotation_file
from medslot.distmatch import read_records
from medslot.synth import generate_corpus, synthetic_pairs, write_corpus


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_same_seed_gives_identical_files(tmp_path):
    a = tree_bytes(write_corpus(generate_corpus(5, seed=3), tmp_path / "a"))
    b = tree_bytes(write_corpus(generate_corpus(5, seed=3), tmp_path / "b"))
    c = tree_bytes(write_corpus(generate_corpus(5, seed=4), tmp_path / "c"))
    assert a == b
    assert a != c
    assert {"rx.csv", "notes.jsonl", "docs/doc0000.txt", "annotations/doc0000.ann"} <= set(a)


def test_output_parses_cleanly(tmp_path):
    out = write_corpus(generate_corpus(20, seed=1), tmp_path)
    for ann in (out / "annotations").glob("*.ann"):
        parse_annotation_file(ann.read_text())
    pairs = convert_corpus(out / "docs", out / "annotations")
    assert pairs and any(p.target for p in pairs)
    records = read_records(out / "rx.csv")
    assert all(r.drug for r in records)


def test_in_memory_pairs_match_files(tmp_path):
    out = write_corpus(generate_corpus(4, seed=2), tmp_path)
    assert convert_corpus(out / "docs", out / "annotations") == synthetic_pairs(4, seed=2)


def test_every_slot_has_five_percent_share():
    pairs = synthetic_pairs(200, seed=0)[:1000]
    assert len(pairs) == 1000
    counts = Counter(label for p in pairs for label, _ in p.target)
    total = sum(counts.values())
    for label in SLOT_LABELS:
        assert counts[label] / total >= 0.05, label


def test_num_docs_must_be_positive():
    with pytest.raises(ValueError):
        generate_corpus(0)
