"""Joint training of a text->frame model (NLU) and a frame->text model (NLG).

Both models learn from the paired set. Unpaired text is run through the NLU,
the decoded frame is detached and the NLG must rebuild the text from it;
unpaired frames go the other way round. The total objective is

    L = alpha*l_nlg_p + beta*l_nlu_p + gamma*l_nlg_u + delta*l_nlu_u

Because pseudo-labels are plain token ids, no gradient crosses between the two
models and each one is optimised by its own tape, Adam state and clipping.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import SlotFrame, linearize_frame, parse_linearized
from .errors import DivergedTraining, EmptyPairedSet, NonFiniteGradient, NonFiniteLoss
from .seq2seq import (
    PAD,
    BatchCycler,
    EncodedSet,
    ModelConfig,
    Trainer,
    build_vocabs,
    evaluate_loss,
    greedy_decode,
    make_batch,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DualConfig:
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 1.0
    delta: float = 0.1
    unpaired_batch_ratio: int = 1
    nlu_config: ModelConfig = field(default_factory=ModelConfig)
    nlg_config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {w}")
        if self.unpaired_batch_ratio < 0:
            raise ValueError("unpaired_batch_ratio must be >= 0")
        if self.nlu_config.max_epochs != self.nlg_config.max_epochs:
            raise ValueError("NLU and NLG configs must train for the same number of epochs")


@dataclass
class TripleDataset:
    paired: list
    unpaired_text: list = field(default_factory=list)
    unpaired_frames: list = field(default_factory=list)

    def __post_init__(self):
        if not self.paired:
            raise EmptyPairedSet("the paired set must not be empty")
        self.unpaired_text = [list(t) for t in self.unpaired_text if len(t)]
        self.unpaired_frames = [
            f if isinstance(f, SlotFrame) else SlotFrame.from_dict(f) for f in self.unpaired_frames
        ]


def nlu_example(pair):
    return list(pair.source_tokens), linearize_frame(pair.target)


def nlg_example(pair):
    return linearize_frame(pair.target), list(pair.source_tokens)


def mixed_loss(l_nlg_p, l_nlu_p, l_nlg_u, l_nlu_u, cfg):
    """Weighted sum of the four component losses (floats)."""
    parts = (l_nlg_p, l_nlu_p, l_nlg_u, l_nlu_u)
    if not all(np.isfinite(x) for x in parts):
        raise NonFiniteLoss(f"non-finite component loss in {parts}")
    return cfg.alpha * l_nlg_p + cfg.beta * l_nlu_p + cfg.gamma * l_nlg_u + cfg.delta * l_nlu_u


def _weighted(loss, w):
    # mirrors train_supervised so a zero-unpaired run is bit-identical
    return ad.mul(loss, w) if w != 1.0 else loss


def joint_vocabs(data, nlu_config, nlg_config):
    """(nlu_src, nlu_tgt, nlg_src, nlg_tgt) built from paired and unpaired training material."""
    text = [list(p.source_tokens) for p in data.paired] + data.unpaired_text
    frames = [linearize_frame(p.target) for p in data.paired]
    frames += [linearize_frame(f) for f in data.unpaired_frames]
    nlu = build_vocabs([], text, frames, shared=nlu_config.shared_embeddings)
    nlg = build_vocabs([], frames, text, shared=nlg_config.shared_embeddings)
    return (*nlu, *nlg)


@dataclass
class JointEpochLog:
    epoch: int
    nlu_train: float
    nlg_train: float
    nlu_val: float
    nlg_val: float
    nlg_unpaired: float
    nlu_unpaired: float
    mixed: float


class _Side:
    """One model plus its paired data and running loss totals."""

    def __init__(self, config, src_vocab, tgt_vocab, weight, pairs, val, to_example):
        self.trainer = Trainer(config, src_vocab, tgt_vocab, weight)
        self.weight = weight
        self.train = _encode([to_example(p) for p in pairs], src_vocab, tgt_vocab)
        self.val = _encode([to_example(p) for p in val], src_vocab, tgt_vocab)
        self.cycler = BatchCycler(len(self.train), config.batch_size, self.trainer.shuffle_rng)
        self.best = self.trainer.snapshot()
        self.best_val = np.inf

    def pseudo(self, src_ids):
        """Greedy outputs of the current parameters as token lists (no tape)."""
        t = self.trainer
        batch = make_batch(src_ids)
        ids = greedy_decode(t.params, t.config, batch.src, batch.src_mask)
        return [t.tgt_vocab.decode(row) for row in ids]


def _encode(examples, src_vocab, tgt_vocab):
    return EncodedSet([src_vocab.encode(s) for s, _ in examples], [tgt_vocab.encode(t) for _, t in examples])


def _as_frame_tokens(tokens):
    """Canonical linearisation of possibly malformed decoder output."""
    tokens = parse_linearized(tokens, strict=False)
    return linearize_frame(tokens)


def _update(side, batch, unpaired, u_weight, epoch):
    """One optimiser step on ``side``; returns (paired loss, [unpaired losses])."""
    t = side.trainer
    tape, p = t.start_step()
    loss = t.loss(p, batch)
    values = [float(loss.value)]
    total = _weighted(loss, side.weight)
    for ub in unpaired:
        u_loss = t.loss(p, ub)
        values.append(float(u_loss.value))
        total = ad.add(total, ad.mul(u_loss, u_weight))
    bad = [v for v in values if not np.isfinite(v)]
    if bad:
        raise DivergedTraining(epoch, bad[0])
    tape.backward(total)
    try:
        t.apply(p)
    except NonFiniteGradient:
        raise DivergedTraining(epoch, values[0]) from None
    return values[0], values[1:]


def _tokens(batch):
    return int((batch.tgt_out != PAD).sum())


def train_joint(data, cfg, val_pairs=None, vocabs=None, callback=None):
    """Train NLU and NLG together; returns ``(nlu_model, nlg_model, history)``.

    ``val_pairs`` (default: the paired set) drives model selection: each model
    keeps the parameters of its own lowest validation loss. ``vocabs`` is the
    4-tuple from :func:`joint_vocabs`.
    """
    if not isinstance(data, TripleDataset):
        raise TypeError("data must be a TripleDataset")
    val_pairs = list(data.paired if val_pairs is None else val_pairs)
    if not val_pairs:
        raise EmptyPairedSet("validation set is empty")
    if vocabs is None:
        vocabs = joint_vocabs(data, cfg.nlu_config, cfg.nlg_config)
    nlu_src, nlu_tgt, nlg_src, nlg_tgt = vocabs
    nlu = _Side(cfg.nlu_config, nlu_src, nlu_tgt, cfg.beta, data.paired, val_pairs, nlu_example)
    nlg = _Side(cfg.nlg_config, nlg_src, nlg_tgt, cfg.alpha, data.paired, val_pairs, nlg_example)

    ratio = cfg.unpaired_batch_ratio
    use_text = cfg.gamma > 0 and ratio > 0 and bool(data.unpaired_text)
    use_frames = cfg.delta > 0 and ratio > 0 and bool(data.unpaired_frames)
    text_ids = [nlu_src.encode(t) for t in data.unpaired_text]
    frame_ids = [nlg_src.encode(linearize_frame(f)) for f in data.unpaired_frames]
    text_cycler = BatchCycler(len(text_ids), cfg.nlu_config.batch_size, np.random.default_rng([cfg.nlu_config.seed, 3]))
    frame_cycler = BatchCycler(len(frame_ids), cfg.nlg_config.batch_size, np.random.default_rng([cfg.nlg_config.seed, 4]))

    steps = max(nlu.cycler.batches_per_epoch(), nlg.cycler.batches_per_epoch())
    if use_text:
        steps = max(steps, -(-text_cycler.batches_per_epoch() // ratio))
    if use_frames:
        steps = max(steps, -(-frame_cycler.batches_per_epoch() // ratio))

    history = []
    for epoch in range(1, cfg.nlu_config.max_epochs + 1):
        sums = {k: [0.0, 0] for k in ("nlu", "nlg", "nlu_u", "nlg_u")}
        for _ in range(steps):
            # pseudo-labels come from the parameters as they stand before this step
            nlg_u = []
            nlu_u = []
            for _ in range(ratio if use_text else 0):
                idx = text_cycler.next()
                frames = [_as_frame_tokens(f) for f in nlu.pseudo([text_ids[i] for i in idx])]
                nlg_u.append(make_batch(
                    [nlg_src.encode(f) for f in frames],
                    [nlg_tgt.encode(data.unpaired_text[i]) for i in idx],
                ))
            for _ in range(ratio if use_frames else 0):
                idx = frame_cycler.next()
                texts = nlg.pseudo([frame_ids[i] for i in idx])
                keep = [(t, i) for t, i in zip(texts, idx) if t]
                if keep:
                    nlu_u.append(make_batch(
                        [nlu_src.encode(t) for t, _ in keep],
                        [nlu_tgt.encode(linearize_frame(data.unpaired_frames[i])) for _, i in keep],
                    ))
            nlu_batch = nlu.train.batch(nlu.cycler.next())
            nlg_batch = nlg.train.batch(nlg.cycler.next())
            lu, lu_u = _update(nlu, nlu_batch, nlu_u, cfg.delta, epoch)
            lg, lg_u = _update(nlg, nlg_batch, nlg_u, cfg.gamma, epoch)
            records = [("nlu", lu, nlu_batch), ("nlg", lg, nlg_batch)]
            records += [("nlu_u", v, b) for v, b in zip(lu_u, nlu_u)]
            records += [("nlg_u", v, b) for v, b in zip(lg_u, nlg_u)]
            for key, value, batch in records:
                n = _tokens(batch)
                sums[key][0] += value * n
                sums[key][1] += n
        means = {k: (s / n if n else 0.0) for k, (s, n) in sums.items()}
        nlu_val = evaluate_loss(nlu.trainer.params, cfg.nlu_config, nlu.val)
        nlg_val = evaluate_loss(nlg.trainer.params, cfg.nlg_config, nlg.val)
        try:
            mixed = mixed_loss(means["nlg"], means["nlu"], means["nlg_u"], means["nlu_u"], cfg)
        except NonFiniteLoss:
            raise DivergedTraining(epoch, float("nan")) from None
        entry = JointEpochLog(
            epoch, means["nlu"], means["nlg"], nlu_val, nlg_val, means["nlg_u"], means["nlu_u"], mixed
        )
        history.append(entry)
        log.debug("epoch %d mixed %.4f nlu val %.4f nlg val %.4f", epoch, mixed, nlu_val, nlg_val)
        if callback is not None:
            callback(entry, nlu.trainer, nlg.trainer)
        for side, v in ((nlu, nlu_val), (nlg, nlg_val)):
            if v < side.best_val:
                side.best_val = v
                side.best = side.trainer.snapshot()
    return nlu.trainer.model(nlu.best), nlg.trainer.model(nlg.best), history


def strip_frames(pairs, seed=0):
    """Frames of ``pairs`` in an order unrelated to their texts (an unpaired frame set)."""
    frames = [p.target for p in pairs]
    order = np.random.default_rng(seed).permutation(len(frames))
    return [frames[i] for i in order]


def split_paired(pairs, paired_fraction, seed=0):
    """Split sentence pairs into (paired, unpaired texts, unpaired frames)."""
    if not 0.0 < paired_fraction <= 1.0:
        raise ValueError("paired_fraction must be in (0, 1]")
    pairs = list(pairs)
    order = np.random.default_rng(seed).permutation(len(pairs))
    k = max(1, int(round(paired_fraction * len(pairs))))
    paired = [pairs[i] for i in order[:k]]
    rest = [pairs[i] for i in order[k:]]
    texts = [list(p.source_tokens) for p in rest]
    return TripleDataset(paired, texts, strip_frames(rest, seed + 1))
