"""Bi-directional LSTM encoder / LSTM decoder with Luong dot-product attention.

Parameters live in a plain ``dict`` of float64 arrays (see
:func:`init_params` for the names). The same forward code serves training
(parameters wrapped as tape variables) and inference (plain constants).
"""

import copy
import dataclasses
import hashlib
import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import PROTECTED_TOKENS, SentencePair, linearize_frame
from .errors import (
    CorruptCheckpoint,
    DivergedTraining,
    EmptySource,
    MedslotError,
    NonFiniteGradient,
    ShapeMismatch,
    VersionMismatch,
)
from .fileio import atomic_write

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 500
    hidden: int = 128
    layers: int = 2
    dropout: float = 0.2
    lr: float = 0.001
    clip_norm: float = 2.0
    max_epochs: int = 70
    batch_size: int = 32
    max_decode_len: int = 60
    seed: int = 0
    init_scale: float = 0.08
    shared_embeddings: bool = True
    input_feed: bool = False

    def __post_init__(self):
        for name in ("embed_dim", "hidden", "layers", "batch_size", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


class Vocab:
    """Token/index mapping with fixed reserved indices pad=0, bos=1, eos=2, unk=3."""

    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @classmethod
    def build(cls, token_lists, min_count=1, reserved=()):
        counts = Counter()
        for tokens in token_lists:
            counts.update(tokens)
        ordered = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
        return cls([*sorted(reserved), *ordered])

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def __contains__(self, token):
        return token in self.stoi

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids):
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out


def as_example(item):
    """Normalise a :class:`SentencePair` or ``(src_tokens, tgt_tokens)`` to token lists."""
    if isinstance(item, SentencePair):
        return list(item.source_tokens), linearize_frame(item.target)
    if isinstance(item, dict):
        return list(item["src"]), list(item["tgt"])
    src, tgt = item
    return list(src), list(tgt)


def build_vocabs(examples, extra_src=(), extra_tgt=(), shared=True):
    """Vocabularies from training examples; ``shared`` gives one joint vocabulary."""
    examples = [as_example(e) for e in examples]
    src_lists = [s for s, _ in examples] + list(extra_src)
    tgt_lists = [t for _, t in examples] + list(extra_tgt)
    if shared:
        joint = Vocab.build(src_lists + tgt_lists, reserved=PROTECTED_TOKENS)
        return joint, joint
    src = Vocab.build(src_lists)
    tgt = Vocab.build(tgt_lists, reserved=PROTECTED_TOKENS)
    return src, tgt


# -- parameters --------------------------------------------------------------


def param_shapes(config, src_vocab_size, tgt_vocab_size):
    e, h = config.embed_dim, config.hidden
    if config.shared_embeddings:
        if src_vocab_size != tgt_vocab_size:
            raise ShapeMismatch("shared embeddings need one joint vocabulary")
        shapes = {"emb": (src_vocab_size, e)}
    else:
        shapes = {"src_emb": (src_vocab_size, e), "tgt_emb": (tgt_vocab_size, e)}
    for layer in range(config.layers):
        in_dim = e if layer == 0 else 2 * h
        for d in ("fwd", "bwd"):
            shapes[f"enc.{layer}.{d}.w_ih"] = (in_dim, 4 * h)
            shapes[f"enc.{layer}.{d}.w_hh"] = (h, 4 * h)
            shapes[f"enc.{layer}.{d}.b"] = (4 * h,)
    for layer in range(config.layers):
        for s in ("h", "c"):
            shapes[f"bridge.{layer}.{s}.w"] = (2 * h, h)
            shapes[f"bridge.{layer}.{s}.b"] = (h,)
    for layer in range(config.layers):
        in_dim = (e + h if config.input_feed else e) if layer == 0 else h
        shapes[f"dec.{layer}.w_ih"] = (in_dim, 4 * h)
        shapes[f"dec.{layer}.w_hh"] = (h, 4 * h)
        shapes[f"dec.{layer}.b"] = (4 * h,)
    shapes["attn.mem"] = (2 * h, h)
    shapes["attn.out"] = (2 * h, h)
    if config.shared_embeddings:
        shapes["out.proj"] = (h, e)
    else:
        shapes["out.w"] = (h, tgt_vocab_size)
    shapes["out.b"] = (tgt_vocab_size,)
    return shapes


def init_params(config, src_vocab_size, tgt_vocab_size, rng=None):
    """Uniform(-init_scale, init_scale) initialisation in a fixed name order."""
    if rng is None:
        rng = np.random.default_rng([config.seed, 0])
    s = config.init_scale
    return {
        name: rng.uniform(-s, s, size=shape)
        for name, shape in param_shapes(config, src_vocab_size, tgt_vocab_size).items()
    }


def check_params(params, config, src_vocab_size, tgt_vocab_size):
    expected = param_shapes(config, src_vocab_size, tgt_vocab_size)
    if set(params) != set(expected):
        raise ShapeMismatch(f"parameter names differ: {sorted(set(params) ^ set(expected))}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")


# -- batching ----------------------------------------------------------------


@dataclass
class Batch:
    src: np.ndarray  # (B, S) int, PAD-padded
    src_mask: np.ndarray  # (B, S) bool
    tgt_in: np.ndarray  # (B, T) starting with BOS
    tgt_out: np.ndarray  # (B, T) ending with EOS, PAD-padded

    @property
    def size(self):
        return self.src.shape[0]


def pad_sequences(seqs, value=PAD):
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), value, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def make_batch(src_ids, tgt_ids=None):
    if any(len(s) == 0 for s in src_ids):
        raise EmptySource("source sequence is empty")
    src = pad_sequences(src_ids)
    tgt_in = tgt_out = None
    if tgt_ids is not None:
        tgt_in = pad_sequences([[BOS, *t] for t in tgt_ids])
        tgt_out = pad_sequences([[*t, EOS] for t in tgt_ids])
    return Batch(src, src != PAD, tgt_in, tgt_out)


class BatchCycler:
    """Endless shuffled mini-batches; a new permutation starts when one is used up."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = []

    def batches_per_epoch(self):
        return -(-self.n // self.batch_size)

    def next(self):
        if not self._order:
            perm = self.rng.permutation(self.n)
            self._order = [perm[i : i + self.batch_size] for i in range(0, self.n, self.batch_size)]
        return self._order.pop(0)


# -- model -------------------------------------------------------------------


def _wrap(params, tape=None):
    if tape is None:
        return {k: ad.Tensor(v) for k, v in params.items()}
    return {k: tape.variable(v, name=k) for k, v in params.items()}


def _split_state(seq, hidden):
    return ad.slice_(seq, 0, hidden), ad.slice_(seq, hidden, 2 * hidden)


def encode(p, config, src, src_mask, training=False, rng=None):
    """Run the bi-LSTM stack. Returns (memory (B,S,2H), [(h_f, c_f, h_b, c_b)] per layer)."""
    h = config.hidden
    batch, steps = src.shape
    if steps == 0:
        raise EmptySource("empty source batch")
    mask_tm = src_mask.T.astype(np.float64)  # (S, B)
    zeros = ad.Tensor(np.zeros((batch, h)))
    x = ad.embedding(p["emb" if config.shared_embeddings else "src_emb"], src.T)  # (S, B, E)
    x = ad.dropout(x, config.dropout, rng, training)
    finals = []
    for layer in range(config.layers):
        outs = []
        states = []
        for d in ("fwd", "bwd"):
            inp = x if d == "fwd" else ad.flip(x, 0)
            m = mask_tm if d == "fwd" else mask_tm[::-1]
            xproj = ad.add(ad.matmul(inp, p[f"enc.{layer}.{d}.w_ih"]), p[f"enc.{layer}.{d}.b"])
            seq = ad.lstm_layer(xproj, p[f"enc.{layer}.{d}.w_hh"], zeros, zeros, m)
            hs, _ = _split_state(seq, h)
            last = ad.index(seq, steps - 1)
            states.extend(_split_state(last, h))
            outs.append(hs if d == "fwd" else ad.flip(hs, 0))
        finals.append(tuple(states))
        x = ad.concat(outs, axis=-1)  # (S, B, 2H)
        if layer + 1 < config.layers:
            x = ad.dropout(x, config.dropout, rng, training)
    memory = ad.swapaxes(x, 0, 1)  # (B, S, 2H)
    return memory, finals


def decoder_init(p, config, finals):
    states = []
    for layer, (hf, cf, hb, cb) in enumerate(finals):
        hcat = ad.concat([hf, hb], axis=-1)
        ccat = ad.concat([cf, cb], axis=-1)
        h0 = ad.tanh(ad.add(ad.matmul(hcat, p[f"bridge.{layer}.h.w"]), p[f"bridge.{layer}.h.b"]))
        c0 = ad.add(ad.matmul(ccat, p[f"bridge.{layer}.c.w"]), p[f"bridge.{layer}.c.b"])
        states.append((h0, c0))
    return states


def decode_steps(p, config, tgt_in_tm, states, training=False, rng=None):
    """Decoder LSTM stack over time-major target ids (T, B).

    Returns (top hidden (T, B, H), final per-layer states).
    """
    h = config.hidden
    x = ad.embedding(p["emb" if config.shared_embeddings else "tgt_emb"], tgt_in_tm)
    x = ad.dropout(x, config.dropout, rng, training)
    steps = tgt_in_tm.shape[0]
    new_states = []
    for layer, (h0, c0) in enumerate(states):
        xproj = ad.add(ad.matmul(x, p[f"dec.{layer}.w_ih"]), p[f"dec.{layer}.b"])
        seq = ad.lstm_layer(xproj, p[f"dec.{layer}.w_hh"], h0, c0)
        x, _ = _split_state(seq, h)
        new_states.append(_split_state(ad.index(seq, steps - 1), h))
        if layer + 1 < config.layers:
            x = ad.dropout(x, config.dropout, rng, training)
    return x, new_states


def attend(p, keys, src_mask, dec_h):
    """Global dot attention. ``keys`` (B,S,H), ``dec_h`` (B,T,H) -> (attentional (B,T,H), weights)."""
    scores = ad.matmul(dec_h, ad.swapaxes(keys, 1, 2))  # (B, T, S)
    weights = ad.softmax(scores, axis=-1, mask=src_mask[:, None, :])
    context = ad.matmul(weights, keys)
    attn_h = ad.tanh(ad.matmul(ad.concat([context, dec_h], axis=-1), p["attn.out"]))
    return attn_h, weights


def feed_step(p, config, keys, src_mask, emb_t, feed, states, training=False, rng=None):
    """One input-feeding decoder step.

    ``emb_t`` (B,E) is the embedded previous token and ``feed`` (B,H) the
    previous attentional state. Returns (attentional (B,H), weights (B,S), states).
    """
    h = config.hidden
    batch = emb_t.shape[0]
    x = ad.concat([emb_t, feed], axis=-1)
    new_states = []
    for layer, (h0, c0) in enumerate(states):
        xproj = ad.add(ad.matmul(x, p[f"dec.{layer}.w_ih"]), p[f"dec.{layer}.b"])
        seq = ad.lstm_layer(ad.reshape(xproj, (1, batch, 4 * h)), p[f"dec.{layer}.w_hh"], h0, c0)
        x, c = _split_state(ad.index(seq, 0), h)
        new_states.append((x, c))
        if layer + 1 < config.layers:
            x = ad.dropout(x, config.dropout, rng, training)
    attn_h, weights = attend(p, keys, src_mask, ad.reshape(x, (batch, 1, h)))
    return ad.reshape(attn_h, (batch, h)), ad.reshape(weights, (batch, -1)), new_states


def _feed_decode(p, config, keys, src_mask, tgt_in_tm, states, training, rng):
    emb = ad.embedding(p["emb" if config.shared_embeddings else "tgt_emb"], tgt_in_tm)
    emb = ad.dropout(emb, config.dropout, rng, training)
    feed = ad.Tensor(np.zeros((tgt_in_tm.shape[1], config.hidden)))
    outs, weights = [], []
    for t in range(tgt_in_tm.shape[0]):
        attn_h, w, states = feed_step(p, config, keys, src_mask, ad.index(emb, t), feed, states, training, rng)
        feed = ad.dropout(attn_h, config.dropout, rng, training)
        outs.append(feed)
        weights.append(w)
    return ad.stack(outs, axis=1), ad.stack(weights, axis=1)


def forward(params, config, src, tgt_in, src_mask=None, training=False, rng=None, tape=None):
    """Teacher-forced pass; returns (logits (B,T,V), attention weights (B,T,S)).

    ``params`` may already be a dict of tensors (as during training) or of arrays.
    """
    src = np.atleast_2d(np.asarray(src))
    tgt_in = np.atleast_2d(np.asarray(tgt_in))
    if src.shape[1] == 0:
        raise EmptySource("empty source")
    if src_mask is None:
        src_mask = np.ones(src.shape, dtype=bool)
    p = params if isinstance(next(iter(params.values())), ad.Tensor) else _wrap(params, tape)
    memory, finals = encode(p, config, src, src_mask, training, rng)
    keys = ad.matmul(memory, p["attn.mem"])
    states = decoder_init(p, config, finals)
    if config.input_feed:
        attn_h, weights = _feed_decode(p, config, keys, src_mask, tgt_in.T, states, training, rng)
        return output_logits(p, config, attn_h), weights
    dec_h, _ = decode_steps(p, config, tgt_in.T, states, training, rng)
    attn_h, weights = attend(p, keys, src_mask, ad.swapaxes(dec_h, 0, 1))
    attn_h = ad.dropout(attn_h, config.dropout, rng, training)
    return output_logits(p, config, attn_h), weights


def output_logits(p, config, attn_h):
    """Vocabulary scores; with shared embeddings the output layer reuses the table."""
    if config.shared_embeddings:
        proj = ad.matmul(attn_h, p["out.proj"])
        return ad.add(ad.matmul(proj, ad.swapaxes(p["emb"], 0, 1)), p["out.b"])
    return ad.add(ad.matmul(attn_h, p["out.w"]), p["out.b"])


def batch_loss(p, config, batch, training=False, rng=None):
    logits, _ = forward(p, config, batch.src, batch.tgt_in, batch.src_mask, training, rng)
    b, t, v = logits.shape
    return ad.nll_loss(ad.reshape(logits, (b * t, v)), batch.tgt_out.reshape(-1), PAD)


def greedy_decode(params, config, src, src_mask=None, max_len=None):
    """Argmax decoding from BOS until EOS or ``max_len``; returns id lists (EOS excluded)."""
    src = np.atleast_2d(np.asarray(src))
    if src_mask is None:
        src_mask = src != PAD
    max_len = config.max_decode_len if max_len is None else max_len
    p = _wrap(params)
    memory, finals = encode(p, config, src, src_mask)
    keys = ad.matmul(memory, p["attn.mem"])
    states = decoder_init(p, config, finals)
    batch = src.shape[0]
    prev = np.full((1, batch), BOS, dtype=np.int64)
    feed = ad.Tensor(np.zeros((batch, config.hidden)))
    emb = p["emb" if config.shared_embeddings else "tgt_emb"]
    done = np.zeros(batch, dtype=bool)
    outputs = [[] for _ in range(batch)]
    for _ in range(max_len):
        if config.input_feed:
            feed, _, states = feed_step(p, config, keys, src_mask, ad.embedding(emb, prev[0]), feed, states)
            attn_h = ad.reshape(feed, (batch, 1, config.hidden))
        else:
            dec_h, states = decode_steps(p, config, prev, states)
            attn_h, _ = attend(p, keys, src_mask, ad.swapaxes(dec_h, 0, 1))
        logits = output_logits(p, config, attn_h).value[:, 0, :]
        nxt = logits.argmax(axis=-1)
        for i in np.flatnonzero(~done):
            if nxt[i] == EOS:
                done[i] = True
            else:
                outputs[i].append(int(nxt[i]))
        if done.all():
            break
        prev = nxt[None, :]
    return outputs


# -- training ----------------------------------------------------------------


@dataclass
class Seq2SeqModel:
    params: dict
    config: ModelConfig
    src_vocab: Vocab
    tgt_vocab: Vocab
    meta: dict = dataclasses.field(default_factory=dict)

    def translate(self, token_lists, batch_size=None):
        """Greedy-decode token lists into output token lists."""
        batch_size = batch_size or self.config.batch_size
        results = []
        for i in range(0, len(token_lists), batch_size):
            chunk = [self.src_vocab.encode(t) for t in token_lists[i : i + batch_size]]
            batch = make_batch(chunk)
            for ids in greedy_decode(self.params, self.config, batch.src, batch.src_mask):
                results.append(self.tgt_vocab.decode(ids))
        return results


@dataclass
class EncodedSet:
    src: list
    tgt: list

    def __len__(self):
        return len(self.src)

    def batch(self, idx):
        return make_batch([self.src[i] for i in idx], [self.tgt[i] for i in idx])


def encode_examples(examples, src_vocab, tgt_vocab):
    examples = [as_example(e) for e in examples]
    return EncodedSet(
        [src_vocab.encode(s) for s, _ in examples], [tgt_vocab.encode(t) for _, t in examples]
    )


def evaluate_loss(params, config, data, batch_size=None):
    """Token-level mean NLL over a whole encoded set (no dropout)."""
    batch_size = batch_size or config.batch_size
    total, count = 0.0, 0
    p = _wrap(params)
    for i in range(0, len(data), batch_size):
        batch = data.batch(range(i, min(i + batch_size, len(data))))
        n = int((batch.tgt_out != PAD).sum())
        total += float(batch_loss(p, config, batch).value) * n
        count += n
    return total / count if count else 0.0


class Trainer:
    """One model's optimisation state: params, Adam moments, RNG streams."""

    def __init__(self, config, src_vocab, tgt_vocab, loss_weight=1.0):
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.loss_weight = loss_weight
        self.params = init_params(config, len(src_vocab), len(tgt_vocab))
        self.adam = ad.Adam(config.lr, clip_norm=config.clip_norm)
        self.shuffle_rng = np.random.default_rng([config.seed, 1])
        self.dropout_rng = np.random.default_rng([config.seed, 2])

    def start_step(self):
        tape = ad.Tape()
        return tape, _wrap(self.params, tape)

    def loss(self, p, batch):
        return batch_loss(p, self.config, batch, training=True, rng=self.dropout_rng)

    def apply(self, p):
        grads = {k: t.grad for k, t in p.items()}
        return self.adam.step(self.params, grads)

    def snapshot(self):
        return {k: v.copy() for k, v in self.params.items()}

    def model(self, params=None, meta=None):
        return Seq2SeqModel(
            params if params is not None else self.params,
            self.config,
            self.src_vocab,
            self.tgt_vocab,
            dict(meta or {}),
        )


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def train_supervised(
    pairs, val_pairs, config, vocabs=None, loss_weight=1.0, callback=None
):
    """Teacher-forced NLL training with Adam and gradient clipping.

    After every epoch the validation loss is measured; the parameters of the
    best epoch are returned together with the per-epoch log. Vocabularies are
    built from the training side unless ``vocabs=(src, tgt)`` is given.
    """
    train = [as_example(e) for e in pairs]
    val = [as_example(e) for e in val_pairs]
    if not train or not val:
        raise MedslotError("training and validation sets must be non-empty")
    if vocabs is None:
        vocabs = build_vocabs(train, shared=config.shared_embeddings)
    src_vocab, tgt_vocab = vocabs
    trainer = Trainer(config, src_vocab, tgt_vocab, loss_weight)
    train_set = encode_examples(train, src_vocab, tgt_vocab)
    val_set = encode_examples(val, src_vocab, tgt_vocab)
    cycler = BatchCycler(len(train_set), config.batch_size, trainer.shuffle_rng)

    best = trainer.snapshot()
    best_val = np.inf
    history = []
    for epoch in range(1, config.max_epochs + 1):
        total, count = 0.0, 0
        for _ in range(cycler.batches_per_epoch()):
            batch = train_set.batch(cycler.next())
            tape, p = trainer.start_step()
            loss = trainer.loss(p, batch)
            value = float(loss.value)
            if not np.isfinite(value):
                raise DivergedTraining(epoch, value)
            tape.backward(ad.mul(loss, loss_weight) if loss_weight != 1.0 else loss)
            try:
                trainer.apply(p)
            except NonFiniteGradient:
                raise DivergedTraining(epoch, value) from None
            n = int((batch.tgt_out != PAD).sum())
            total += value * n
            count += n
        val_loss = evaluate_loss(trainer.params, config, val_set)
        entry = EpochLog(epoch, total / count, val_loss)
        history.append(entry)
        log.debug("epoch %d train %.4f val %.4f", epoch, entry.train_loss, val_loss)
        if callback is not None:
            callback(entry, trainer)
        if val_loss < best_val:
            best_val = val_loss
            best = trainer.snapshot()
    return trainer.model(best), history


def write_log(path, history):
    with atomic_write(path) as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for e in history:
            fh.write(f"{e.epoch},{e.train_loss:.6f},{e.val_loss:.6f}\n")


# -- checkpoints -------------------------------------------------------------

MAGIC = b"MEDSLOT\x00"
FORMAT_VERSION = 1


def save_checkpoint(model, path):
    """Binary checkpoint: magic, JSON header, little-endian float64 arrays, SHA-256."""
    names = list(model.params)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": {"src": model.src_vocab.itos, "tgt": model.tgt_vocab.itos},
        "arrays": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "meta": model.meta,
    }
    head = json.dumps(header, ensure_ascii=False).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<I", len(head))
    body += head
    for n in names:
        body += np.ascontiguousarray(model.params[n], dtype="<f8").tobytes()
    body += hashlib.sha256(body).digest()
    with atomic_write(path, "wb") as fh:
        fh.write(bytes(body))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 + 32 or not data.startswith(MAGIC):
        raise CorruptCheckpoint(f"{path}: not a medslot checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint(f"{path}: checksum mismatch (truncated or modified file)")
    (head_len,) = struct.unpack_from("<I", body, len(MAGIC))
    offset = len(MAGIC) + 4
    try:
        header = json.loads(body[offset : offset + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptCheckpoint(f"{path}: unreadable header") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    offset += head_len
    params = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        chunk = body[offset : offset + 8 * n]
        if len(chunk) != 8 * n:
            raise CorruptCheckpoint(f"{path}: array {spec['name']} truncated")
        params[spec["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * n
    if offset != len(body):
        raise CorruptCheckpoint(f"{path}: {len(body) - offset} trailing bytes")
    config = ModelConfig(**header["config"])
    src_vocab = Vocab(header["vocab"]["src"][len(SPECIALS) :])
    tgt_vocab = Vocab(header["vocab"]["tgt"][len(SPECIALS) :])
    check_params(params, config, len(src_vocab), len(tgt_vocab))
    return Seq2SeqModel(params, config, src_vocab, tgt_vocab, header.get("meta", {}))


def clone_model(model):
    return copy.deepcopy(model)


def predict_frames(model, token_lists, bpe=None):
    """Decode source token lists into slot frames (lenient parsing of model output)."""
    from .corpus import parse_linearized
    from .subword import decode as bpe_decode, encode as bpe_encode

    sources = [bpe_encode(bpe, t) for t in token_lists] if bpe is not None else list(token_lists)
    outputs = model.translate(sources)
    if bpe is not None:
        outputs = [bpe_decode(bpe, o, strict=False) for o in outputs]
    return [parse_linearized(o, strict=False) for o in outputs]
