# %% [markdown]
# Distant supervision: pairing prescription rows with note sentences
#
# No hand annotation here. Each prescription row is scored against every
# sentence of the same patient's notes, one point per matching field, and the
# best sentence (if it reaches the threshold) becomes a training pair.

# %%
from medslot.corpus import ClinicalDocument, segment_sentences
from medslot.distmatch import (
    PrescriptionRecord,
    field_phrases,
    filter_corpus,
    match_corpus,
    match_patient,
    score_sentence,
)
from medslot.synth import generate_corpus

record = PrescriptionRecord("p1", "Tacrolimus", "1", "mg", "Capsule", "PO", "BID")
summary = ClinicalDocument("p1", [
    "Tacrolimus level 12 this morning.",
    "Tacrolimus 1 mg PO daily.",
    "Pt discharged on Tacrolimus 1 mg",
    "capsule by mouth twice a day.",
])
sentences = [s.tokens for s in segment_sentences(summary)]

# %% [markdown]
# Route and frequency go through a small synonym table, so `PO` also
# matches "by mouth" and `BID` also matches "twice a day".

# %%
print(field_phrases(record, "route"), field_phrases(record, "frequency"))
for s in sentences:
    score, fields = score_sentence(record, s)
    print(score, sorted(fields), " ".join(s))

# %%
best = match_patient([record], sentences)[0]
print("selected:", " ".join(best.sentence), "with", best.score, "points")

# %% [markdown]
# Whole corpus: synthetic prescription rows against synthetic notes.
# Duplicates and over-long sentences are dropped at the end.

# %%
docs = generate_corpus(30, seed=3)
records = [r for d in docs for r in d.records]
notes = {d.doc_id: [s.tokens for s in segment_sentences(d.document)] for d in docs}
results = match_corpus(records, notes)
pairs = filter_corpus(results, max_src_len=100)
print(f"{len(records)} records, {len(results)} matched, {len(pairs)} pairs after filtering")
for p in pairs[:5]:
    print(" ".join(p.source_tokens), "->", p.target)

# %% [markdown]
# The matched frames only carry what the record knows (drug, dose, route,
# frequency), so duration and reason never show up in this data.

# %%
labels = {label for p in pairs for label in p.target.labels()}
print(sorted(labels))
