# %% [markdown]
# From a discharge summary to sentence pairs
#
# A document plus its offset-based medication annotations becomes a list of
# (sentence, slot frame) pairs. The frame drops all positions, so the model
# only ever sees text in and a flat list of slot values out.

# %%
from medslot.corpus import align_events_to_sentences, linearize_frame, parse_linearized, segment_sentences
from medslot.subword import count_words, decode, encode, learn_bpe
from medslot.synth import annotation_text, generate_corpus, synthetic_pairs

doc = generate_corpus(1, seed=7)[0]
print("\n".join(doc.document.lines))

# %% [markdown]
# The annotation file uses the i2b2 layout: one medication event per line,
# `label="value" line:char line:char` entries separated by `||`, with "nm"
# marking a field that is not mentioned.

# %%
print(annotation_text(doc))

# %%
for sent in segment_sentences(doc.document):
    print(sent.index, sent.line_span, " ".join(sent.tokens))

# %% [markdown]
# Every slot entry lands in the sentence holding its first character.
# Sentences without medications keep an empty frame.

# %%
pairs = align_events_to_sentences(doc.document, doc.events)
for p in pairs:
    print(" ".join(p.source_tokens))
    print("   ->", " ".join(linearize_frame(p.target)))

# %% [markdown]
# The linearised target parses back to the same frame.

# %%
frame = pairs[0].target if pairs[0].target else next(p.target for p in pairs if p.target)
assert parse_linearized(linearize_frame(frame)) == frame

# %% [markdown]
# Subword units. Merges are learned from word counts of both sides, slot
# markers such as `m=` are protected, and `@@` marks a piece that continues.

# %%
corpus = synthetic_pairs(50, seed=1)
counts = count_words([list(p.source_tokens) for p in corpus] + [linearize_frame(p.target) for p in corpus])
bpe = learn_bpe(counts, 200)
print(len(bpe.merges), "merges, first ten:", bpe.merges[:10])

for tokens in (["tacrolimus", "1", "mg", "po", "bid"], ["hydroxychloroquine", "200", "mg"]):
    pieces = encode(bpe, tokens)
    print(tokens, "->", pieces)
    assert decode(bpe, pieces) == tokens
