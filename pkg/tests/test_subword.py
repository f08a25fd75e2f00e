import io
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from medslot.errors import DanglingJoiner, MedslotError
from medslot.subword import (
    BpeModel,
    count_words,
    decode,
    encode,
    learn_bpe,
    load_merges,
    merges_from_text,
    merges_to_text,
    save_merges,
)


def oracle_bpe(word_counts, num_merges):
    """Plain re-implementation: recount every pair from scratch each round."""
    vocab = {tuple(w[:-1]) + (w[-1] + "</w>",): n for w, n in word_counts.items()}
    merges = []
    for _ in range(num_merges):
        pairs = Counter()
        for sym, n in vocab.items():
            for a, b in zip(sym, sym[1:]):
                pairs[a, b] += n
        if not pairs:
            break
        best_n = max(pairs.values())
        if best_n < 2:
            break
        best = min(p for p, n in pairs.items() if n == best_n)
        merges.append(best)
        new = {}
        for sym, n in vocab.items():
            out, i = [], 0
            while i < len(sym):
                if i + 1 < len(sym) and (sym[i], sym[i + 1]) == best:
                    out.append(sym[i] + sym[i + 1])
                    i += 2
                else:
                    out.append(sym[i])
                    i += 1
            new[tuple(out)] = new.get(tuple(out), 0) + n
        vocab = new
    return tuple(merges)


def test_single_merge_aaab():
    assert learn_bpe({"aaab": 5}, 1).merges == (("a", "a"),)


def test_low_lower_lowest_hand_run():
    # pair counts: (l,o)=8 (o,w)=7 ... -> l+o, then lo+w</w>=5 vs lo+w=3 -> lo+w</w>, then lo+w
    model = learn_bpe({"low": 5, "lower": 2, "lowest": 1}, 3)
    assert model.merges == (("l", "o"), ("lo", "w</w>"), ("lo", "w"))


def test_zero_merges():
    model = learn_bpe({"ab": 3, "c": 1}, 0)
    assert model.merges == ()
    assert {"a", "b</w>", "c</w>"} <= set(model.vocab)


def test_empty_corpus_and_early_stop():
    assert learn_bpe({}, 10).merges == ()
    # every pair occurs once -> nothing worth merging
    assert learn_bpe({"abc": 1}, 10).merges == ()


def test_seen_word_is_single_symbol():
    model = learn_bpe({"tylenol": 10}, 50)
    assert encode(model, ["tylenol"]) == ["tylenol"]


def test_unseen_word_falls_back_to_characters():
    model = learn_bpe({"aa": 4}, 5)
    assert encode(model, ["qzx"]) == ["q@@", "z@@", "x"]


def test_protected_tokens_untouched():
    model = learn_bpe({"mg": 9}, 5)
    assert encode(model, ["m=", "mg", ";", "<empty>"]) == ["m=", "mg", ";", "<empty>"]


def test_tokens_ending_in_the_joiner_round_trip():
    model = learn_bpe({"@@": 10, "x@@": 5}, 5)
    for tokens in (["@@"], ["x@@", "y"], ["@@@"]):
        assert decode(model, encode(model, tokens)) == tokens


def test_decode_examples():
    model = BpeModel((), frozenset())
    assert decode(model, ["lo@@", "w"]) == ["low"]
    assert decode(model, []) == []
    with pytest.raises(DanglingJoiner):
        decode(model, ["lo@@"])
    assert decode(model, ["lo@@"], strict=False) == ["lo"]


_word = st.text(alphabet=st.sampled_from("abcdelmnostw0123.-/é@"), min_size=1, max_size=8)
_counts = st.dictionaries(_word, st.integers(1, 20), max_size=15)


@settings(max_examples=60, deadline=None)
@given(_counts, st.integers(0, 40))
def test_matches_recount_oracle(counts, k):
    assert learn_bpe(counts, k).merges == oracle_bpe(counts, k)


@settings(max_examples=60, deadline=None)
@given(_counts, st.integers(0, 40), st.lists(_word, max_size=10))
def test_round_trip_and_vocab_bound(counts, k, tokens):
    model = learn_bpe(counts, k)
    assert decode(model, encode(model, tokens)) == tokens
    base = {c for w in counts for c in w[:-1]} | {w[-1] + "</w>" for w in counts}
    assert len({s for w in counts for s in model.segment(w)}) <= len(base) + k


def test_merges_file_round_trip():
    model = learn_bpe(count_words([["lasix", "lisinopril", "lasix"], ["mg", "m="]]), 20)
    buf = io.StringIO()
    save_merges(model, buf)
    assert buf.getvalue().startswith(f"#bpe-v1 {len(model.merges)}\n")
    again = load_merges(io.StringIO(buf.getvalue()))
    assert again.merges == model.merges
    assert merges_from_text(merges_to_text(model)).merges == model.merges


@pytest.mark.parametrize("text", ["", "#bpe-v2 1\na b\n", "#bpe-v1 2\na b\n", "#bpe-v1 1\nabc\n"])
def test_bad_merges_files(text):
    with pytest.raises(MedslotError):
        merges_from_text(text)


def test_count_words_skips_protected():
    assert count_words([["m=", "lasix", ";", "lasix"]]) == Counter({"lasix": 2})
