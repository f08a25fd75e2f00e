# %% [markdown]
# Joint NLU/NLG training with very few labelled sentences
#
# Two models share the work. NLU reads text and writes a frame. NLG reads a
# frame and writes text. Only 5% of the corpus keeps its labels. The rest
# becomes unpaired text and, separately shuffled, unpaired frames.
#
# Each unpaired text is run through NLU, and NLG learns to rebuild the text
# from that guessed frame. Each unpaired frame is run through NLG, and NLU
# learns to recover the frame from the generated text. The guesses are
# plain token ids, so no gradient crosses from one model into the other.

# %%
import time

import numpy as np

from medslot.corpus import linearize_frame
from medslot.dualsemi import DualConfig, joint_vocabs, nlu_example, split_paired, train_joint
from medslot.seq2seq import ModelConfig, predict_frames, train_supervised
from medslot.slotval import evaluate_frames
from medslot.synth import synthetic_pairs

data = split_paired(synthetic_pairs(120, seed=100, medication_only=True), 0.05, seed=0)
test = synthetic_pairs(40, seed=500, medication_only=True)[:100]
val = synthetic_pairs(10, seed=600, medication_only=True)[:16]
print(len(data.paired), "paired,", len(data.unpaired_text), "texts,", len(data.unpaired_frames), "frames")
print("an unpaired frame:", data.unpaired_frames[0])

# %% [markdown]
# Loss weights: paired NLG 1, paired NLU 0.1, text reconstruction 1,
# frame reconstruction 0.1.

# %%
cfg = ModelConfig(embed_dim=32, hidden=32, layers=1, dropout=0.2, batch_size=8, lr=0.005, max_epochs=30, seed=0)
vocabs = joint_vocabs(data, cfg, cfg)


def show(entry, nlu, nlg):
    if entry.epoch % 5 == 0:
        print(f"epoch {entry.epoch:2d}  nlu {entry.nlu_train:.3f}  nlg {entry.nlg_train:.3f}  "
              f"text rec {entry.nlg_unpaired:.3f}  frame rec {entry.nlu_unpaired:.3f}")


start = time.time()
nlu, nlg, history = train_joint(
    data, DualConfig(1.0, 0.1, 1.0, 0.1, nlu_config=cfg, nlg_config=cfg), val, vocabs=vocabs, callback=show
)
print(f"{time.time() - start:.0f}s")

# %% [markdown]
# The baseline sees only the labelled sentences. One joint epoch walks the
# paired set many times (once per unpaired batch), so the baseline gets as
# many epochs as it takes to match that number of updates.

# %%
paired = [nlu_example(p) for p in data.paired]
per_epoch = int(np.ceil(len(paired) / cfg.batch_size))
steps = max(per_epoch, int(np.ceil(len(data.unpaired_text) / cfg.batch_size)))
base, _ = train_supervised(
    paired, [nlu_example(p) for p in val], cfg.replace(max_epochs=cfg.max_epochs * steps // per_epoch),
    vocabs=vocabs[:2],
)

refs = [p.target for p in test]
for name, model in (("paired only", base), ("joint", nlu)):
    report = evaluate_frames(predict_frames(model, [p.source_tokens for p in test]), refs)
    print(report.table(name))

# %% [markdown]
# NLG output for a frame it never saw paired with text:

# %%
print(" ".join(nlg.translate([linearize_frame(data.unpaired_frames[1])])[0]))
