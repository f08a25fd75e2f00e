"""Acceptance suite: one test (or small group) per criterion.

Each test stores a one-line summary with ``record_property("detail", ...)``;
conftest.py prints a PASS/FAIL line per criterion at the end of the run.
"""

import json
import random
import time

import numpy as np
import pytest

import gradcheck
from oracles import brute_force_counts, random_frame
from medslot import cli
from medslot.corpus import SLOT_LABELS, ClinicalDocument, segment_sentences
from medslot.distmatch import PrescriptionRecord, match_patient, score_sentence
from medslot.dualsemi import DualConfig, joint_vocabs, nlg_example, nlu_example, split_paired, train_joint
from medslot.seq2seq import ModelConfig, batch_loss, make_batch, param_shapes, predict_frames, train_supervised
from medslot.slotval import evaluate_frames, macro_f1, round_half_up, score_pair
from medslot.subword import count_words, decode, encode, learn_bpe
from medslot.synth import synthetic_pairs


# -- 1. gradients ------------------------------------------------------------


def _random_model_case(trial, rng):
    cfg = ModelConfig(
        embed_dim=6, hidden=4, layers=1 + trial % 2, dropout=0.0,
        input_feed=bool(trial & 2), shared_embeddings=not trial & 4,
    )
    v = 10
    params = {k: rng.uniform(-0.5, 0.5, size=s) for k, s in param_shapes(cfg, v, v).items()}
    n = int(rng.integers(1, 4))
    src = [list(rng.integers(4, v, size=rng.integers(1, 5))) for _ in range(n)]
    tgt = [list(rng.integers(4, v, size=rng.integers(1, 4))) for _ in range(n)]
    batch = make_batch(src, tgt)
    names = list(params)

    def loss(*xs):
        return batch_loss(dict(zip(names, xs)), cfg, batch)

    return loss, [params[k] for k in names]


@pytest.mark.criterion(1)
def test_gradients_match_finite_differences(record_property):
    start = time.perf_counter()
    worst_prim, worst_model = 0.0, 0.0
    for trial in range(100):
        rng = np.random.default_rng([1, trial])
        for name, fn, inputs, skip in gradcheck.primitive_cases(rng):
            worst_prim = max(worst_prim, gradcheck.check(fn, inputs, skip))
        loss, arrays = _random_model_case(trial, rng)
        worst_model = max(worst_model, gradcheck.check(loss, arrays, positions_per_array=2, rng=rng))
    elapsed = time.perf_counter() - start
    record_property(
        "detail", f"100 trials, max rel error primitives {worst_prim:.1e}, model {worst_model:.1e}, {elapsed:.0f}s"
    )
    assert worst_prim < 1e-4 and worst_model < 1e-4
    assert elapsed < 120


# -- 2. BPE round trip -------------------------------------------------------

_ALPHABET = list("abcdefghijklmnopqrstuvwxyz0123456789.,;:-/()%@=<>é") + ["@@", "</w>", "ñ", "µ"]


def _fuzz_token(rng):
    return "".join(rng.choice(_ALPHABET, size=int(rng.integers(1, 10))))


@pytest.mark.criterion(2)
def test_bpe_round_trip_and_determinism(record_property):
    rng = np.random.default_rng(2)
    corpus = [p.source_tokens for p in synthetic_pairs(30, seed=2)]
    corpus += [[_fuzz_token(rng) for _ in range(8)] for _ in range(200)]
    counts = count_words(corpus)
    model = learn_bpe(counts, 300)
    shuffled = list(counts.items())
    random.Random(0).shuffle(shuffled)
    again = learn_bpe(dict(shuffled), 300)
    assert model.merges == again.merges

    failures = 0
    for _ in range(10_000):
        tokens = [_fuzz_token(rng) for _ in range(int(rng.integers(0, 12)))]
        if rng.random() < 0.3:
            tokens += list(rng.choice(["m=", "do=", ";", "<empty>", "lasix", "650"], size=2))
        if decode(model, encode(model, tokens)) != tokens:
            failures += 1
    record_property("detail", f"{failures} round-trip failures in 10000 lists, {len(model.merges)} merges reproducible")
    assert failures == 0


# -- 3. evaluator oracle -----------------------------------------------------


@pytest.mark.criterion(3)
def test_evaluator_matches_brute_force(record_property):
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(1000):
        pred, ref = random_frame(rng), random_frame(rng)
        got = score_pair(pred, ref)
        if {k: [c.tp, c.fp, c.fn] for k, c in got.counts.items()} != brute_force_counts(pred, ref):
            mismatches += 1
    record_property("detail", f"{mismatches} mismatches in 1000 frame pairs")
    assert mismatches == 0


# -- 4. table arithmetic -----------------------------------------------------


@pytest.mark.criterion(4)
def test_lstm_row_macro_is_078(record_property):
    row = dict(zip(SLOT_LABELS, (0.94, 0.92, 0.93, 0.89, 0.49, 0.50)))
    value = round_half_up(macro_f1(row))
    record_property("detail", f"macro {macro_f1(row):.4f} -> {value:.2f}")
    assert value == 0.78


# -- 5. supervised overfit ---------------------------------------------------


def _macro(model, pairs):
    frames = predict_frames(model, [p.source_tokens for p in pairs])
    return evaluate_frames(frames, [p.target for p in pairs]).macro_f1


@pytest.mark.criterion(5)
def test_supervised_overfit(record_property):
    train = synthetic_pairs(40, seed=11, medication_only=True)[:64]
    held = synthetic_pairs(20, seed=99, medication_only=True)[:32]
    val = synthetic_pairs(20, seed=55, medication_only=True)[:32]
    # default config: lr 1e-3, hidden 128, embed 500, 2 layers, dropout 0.2, clip 2.0
    cfg = ModelConfig(batch_size=2, max_epochs=200, seed=0)
    final = {}

    def keep_last(entry, trainer):
        if entry.epoch == cfg.max_epochs:
            final["model"] = trainer.model()

    start = time.perf_counter()
    train_supervised(train, val, cfg, callback=keep_last)
    elapsed = time.perf_counter() - start
    f_train, f_held = _macro(final["model"], train), _macro(final["model"], held)
    record_property("detail", f"train F1 {f_train:.3f}, held-out F1 {f_held:.3f}, {elapsed:.0f}s")
    assert f_train >= 0.95 and f_held >= 0.80
    assert elapsed < 600


# -- 6. semi-supervised benefit ----------------------------------------------

SEMI = ModelConfig(embed_dim=32, hidden=32, layers=1, dropout=0.2, batch_size=8, lr=0.005, max_epochs=30)


def _batches(n, size):
    return -(-n // size)


@pytest.mark.criterion(6)
def test_joint_training_beats_paired_only_baseline(record_property):
    test = synthetic_pairs(40, seed=500, medication_only=True)[:100]
    val = synthetic_pairs(10, seed=600, medication_only=True)[:16]
    base_scores, joint_scores = [], []
    for seed in (0, 1, 2):
        data = split_paired(synthetic_pairs(120, seed=100 + seed, medication_only=True), 0.05, seed=seed)
        cfg = SEMI.replace(seed=seed)
        vocabs = joint_vocabs(data, cfg, cfg)
        paired = [nlu_example(p) for p in data.paired]
        # the joint loop cycles the paired set once per unpaired batch, so the
        # baseline gets the same number of paired updates
        per_epoch = _batches(len(paired), cfg.batch_size)
        steps = max(per_epoch, _batches(len(data.unpaired_text), cfg.batch_size))
        base, _ = train_supervised(
            paired, [nlu_example(p) for p in val], cfg.replace(max_epochs=cfg.max_epochs * steps // per_epoch), vocabs=vocabs[:2]
        )
        nlu, _, _ = train_joint(data, DualConfig(1, 0.1, 1, 0.1, nlu_config=cfg, nlg_config=cfg), val, vocabs=vocabs)
        base_scores.append(_macro(base, test))
        joint_scores.append(_macro(nlu, test))
    b, j = float(np.mean(base_scores)), float(np.mean(joint_scores))
    per_seed = ", ".join(f"{x:.2f}/{y:.2f}" for x, y in zip(base_scores, joint_scores))
    record_property("detail", f"3-seed NLU F1 baseline {b:.3f} vs joint {j:.3f} (per seed {per_seed})")
    assert j >= b


@pytest.mark.criterion(6)
def test_zero_unpaired_weights_are_bit_identical(record_property):
    data = split_paired(synthetic_pairs(30, seed=100, medication_only=True), 0.2, seed=0)
    cfg = SEMI.replace(max_epochs=3, seed=4)
    vocabs = joint_vocabs(data, cfg, cfg)
    nlu, nlg, _ = train_joint(data, DualConfig(1, 0.1, 0, 0, nlu_config=cfg, nlg_config=cfg), vocabs=vocabs)
    nlu_ex = [nlu_example(p) for p in data.paired]
    nlg_ex = [nlg_example(p) for p in data.paired]
    ref_nlu, _ = train_supervised(nlu_ex, nlu_ex, cfg, vocabs=vocabs[:2], loss_weight=0.1)
    ref_nlg, _ = train_supervised(nlg_ex, nlg_ex, cfg, vocabs=vocabs[2:], loss_weight=1.0)
    same = all(
        np.array_equal(got.params[k], ref.params[k])
        for got, ref in ((nlu, ref_nlu), (nlg, ref_nlg))
        for k in ref.params
    )
    record_property("detail", f"gamma=delta=0 parameters bit-identical to supervised runs: {same}")
    assert same


# -- 7. distant matcher ------------------------------------------------------

SUMMARY = """Tacrolimus level 12 this morning.
Tacrolimus 1 mg PO daily.
Continue tacrolimus.
Pt discharged on Tacrolimus 1 mg
capsule by mouth twice a day.
Patient doing well."""
RECORD = PrescriptionRecord("p7", "Tacrolimus", "1", "mg", "Capsule", "PO", "BID")


@pytest.mark.criterion(7)
def test_matcher_scenario(record_property):
    sentences = [s.tokens for s in segment_sentences(ClinicalDocument("p7", SUMMARY.splitlines()))]
    scores = [score_sentence(RECORD, s)[0] for s in sentences]
    assert scores == [1, 3, 1, 5, 0]
    (res,) = match_patient([RECORD], sentences)
    assert res.score == 5 and res.sentence_index == 3
    for k in range(1, 7):
        assert len(match_patient([RECORD], sentences, min_score=k)) == (1 if k <= 5 else 0)
    for s, score in zip(sentences, scores):
        assert len(match_patient([RECORD], [s], min_score=2)) == (1 if score >= 2 else 0)
    record_property("detail", f"line scores {scores}, selected line 4 (5 pts), lines below 2 rejected")


_POOLS = {
    "drug": ["Lasix", "Tacrolimus", "Heparin", "Aspirin"],
    "dose_value": ["1", "20", "81", "5000"],
    "dose_unit": ["mg", "units"],
    "form": ["Tablet", "Capsule", "Syringe"],
    "route": ["PO", "IV", "SC"],
    "frequency": ["BID", "DAILY", "QHS", "Q6H"],
}
_WORDS = ["lasix", "tacrolimus", "heparin", "aspirin", "1", "20", "81", "5000", "mg", "units", "tab",
          "capsule", "syringe", "po", "by", "mouth", "iv", "sc", "bid", "daily", "qhs", "twice", "a", "day",
          "every", "6", "hours", "at", "bedtime", "and", "continue"]


@pytest.mark.criterion(7)
def test_matcher_monotonicity(record_property):
    rng = random.Random(7)
    violations = 0
    for _ in range(1000):
        fields = {k: rng.choice(v) for k, v in _POOLS.items()}
        for k in rng.sample(["dose_value", "form", "route", "frequency"], rng.randint(1, 4)):
            fields[k] = ""
        sentence = [rng.choice(_WORDS) for _ in range(rng.randint(1, 10))]
        base, base_fields = score_sentence(PrescriptionRecord("p", **fields), sentence)
        # add one field to the record
        blank = [k for k in ("dose_value", "form", "route", "frequency") if not fields[k]]
        name = rng.choice(blank)
        fields[name] = rng.choice(_POOLS[name])
        more, more_fields = score_sentence(PrescriptionRecord("p", **fields), sentence)
        # extend the sentence
        longer, _ = score_sentence(PrescriptionRecord("p", **fields), sentence + [rng.choice(_WORDS)])
        if more < base or not base_fields <= more_fields or longer < more:
            violations += 1
    record_property("detail", f"{violations} monotonicity violations in 1000 perturbations")
    assert violations == 0


# -- 8. end to end -----------------------------------------------------------


@pytest.mark.criterion(8)
def test_cli_pipeline(tmp_path, record_property):
    start = time.perf_counter()
    q = "--quiet"

    def run(*argv):
        code = cli.main([str(a) for a in argv])
        assert code == 0, argv
        return code

    for name, seed, n in (("train", 1, 40), ("test", 2, 10)):
        run("synth", "--num-docs", n, "--seed", seed, "--out", tmp_path / name, q)
        run("convert", "--docs", tmp_path / name / "docs", "--annotations", tmp_path / name / "annotations",
            "--out", tmp_path / f"{name}.jsonl", q)
    run("bpe", "learn", "--in", tmp_path / "train.jsonl", "--merges", 200, "--out", tmp_path / "codes.txt", q)
    run("bpe", "apply", "--codes", tmp_path / "codes.txt", "--in", tmp_path / "train.jsonl",
        "--out", tmp_path / "train.bpe.jsonl", q)
    run("train", "--pairs", tmp_path / "train.jsonl", "--val", tmp_path / "test.jsonl", "--bpe", tmp_path / "codes.txt",
        "--out", tmp_path / "model.ckpt", "--epochs", 8, "--embed", 64, "--hidden", 64, "--layers", 1,
        "--batch-size", 16, "--lr", 0.005, "--log", tmp_path / "log.csv", q)
    run("predict", "--model", tmp_path / "model.ckpt", "--in", tmp_path / "test.jsonl", "--out", tmp_path / "pred.jsonl", q)
    run("evaluate", "--pred", tmp_path / "pred.jsonl", "--ref", tmp_path / "test.jsonl",
        "--out", tmp_path / "report.json", "--name", "LSTM", q)
    elapsed = time.perf_counter() - start

    report = json.loads((tmp_path / "report.json").read_text())
    assert 0.0 <= report["macro_f1"] <= 1.0
    for label in SLOT_LABELS:
        assert set(report[label]) >= {"p", "r", "f1"}
        assert all(0.0 <= report[label][k] <= 1.0 for k in ("p", "r", "f1"))
    record_property("detail", f"exit 0 at every step, report macro F1 {report['macro_f1']:.2f}, {elapsed:.0f}s")
    assert elapsed < 15 * 60
