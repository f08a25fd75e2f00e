"""``medslot`` command-line tool.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

import argparse
import json
import logging
import os
import sys
import time

from . import dualsemi, seq2seq, subword
from .corpus import SentencePair, convert_corpus, parse_linearized
from .distmatch import filter_corpus, match_corpus, notes_from_rows, read_records
from .errors import DivergedTraining, MedslotError
from .fileio import atomic_write, read_jsonl, write_jsonl
from .slotval import evaluate

log = logging.getLogger("medslot")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text):
    return 0 if text.strip() == "0" else _positive_int(text)


def _unit_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _dropout(text):
    value = _unit_float(text)
    if value >= 1.0:
        raise argparse.ArgumentTypeError("dropout must be < 1")
    return value


# -- logging -----------------------------------------------------------------


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {
            "time": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        out.update(getattr(record, "fields", {}))
        return json.dumps(out)


def _setup_logging(quiet, json_logs):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(message)s"))
    root = logging.getLogger("medslot")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if quiet else logging.INFO)
    root.propagate = False


# -- shared readers ----------------------------------------------------------


def _read_pairs(path):
    return [SentencePair.from_json(row) for row in read_jsonl(path)]


def _read_examples(path):
    """(src, tgt) token lists from a pair file, without interpreting tgt."""
    out = []
    for i, row in enumerate(read_jsonl(path), 1):
        if not isinstance(row, dict):
            row = {}
        src, tgt = row.get("src"), row.get("tgt")
        if not _token_list(src) or not _token_list(tgt):
            raise MedslotError(f"{path}:{i}: expected non-empty 'src' and 'tgt' token lists")
        out.append((src, tgt))
    return out


def _token_list(x):
    return isinstance(x, list) and x and all(isinstance(t, str) and t for t in x)


def _model_config(args):
    return seq2seq.ModelConfig(
        embed_dim=args.embed,
        hidden=args.hidden,
        layers=args.layers,
        dropout=args.dropout,
        lr=args.lr,
        clip_norm=args.clip,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _epoch_logger(name):
    def callback(entry, *_):
        log.info(
            "%s epoch %d train %.4f val %.4f",
            name,
            entry.epoch,
            getattr(entry, "train_loss", getattr(entry, "nlu_train", 0.0)),
            getattr(entry, "val_loss", getattr(entry, "nlu_val", 0.0)),
            extra={"fields": {"model": name, "epoch": entry.epoch}},
        )

    return callback


# -- subcommands -------------------------------------------------------------


def cmd_synth(args):
    from .synth import generate_corpus, write_corpus

    docs = generate_corpus(args.num_docs, args.seed)
    write_corpus(docs, args.out)
    log.info("wrote %d synthetic documents to %s", len(docs), args.out)


def cmd_convert(args):
    pairs = convert_corpus(args.docs, args.annotations, args.ann_suffix)
    write_jsonl(args.out, [p.to_json() for p in pairs])
    with_meds = sum(1 for p in pairs if p.target)
    log.info("wrote %d pairs (%d with medications) to %s", len(pairs), with_meds, args.out)


def cmd_bpe_learn(args):
    token_lists = []
    for src, tgt in _read_examples(args.input):
        token_lists += [src, tgt]
    model = subword.learn_bpe(subword.count_words(token_lists), args.merges)
    with atomic_write(args.out) as fh:
        subword.save_merges(model, fh)
    log.info("learned %d merges -> %s", len(model.merges), args.out)


def cmd_bpe_apply(args):
    model = _load_codes(args.codes)
    rows = []
    for row in read_jsonl(args.input):
        if not isinstance(row, dict) or not _token_list(row.get("src")):
            raise MedslotError(f"{args.input}: every row needs a non-empty 'src' token list")
        row = dict(row)
        for key in ("src", "tgt"):
            if key in row:
                row[key] = subword.encode(model, row[key])
        rows.append(row)
    write_jsonl(args.out, rows)
    log.info("segmented %d rows -> %s", len(rows), args.out)


def _load_codes(path):
    with open(path, encoding="utf-8") as fh:
        return subword.load_merges(fh)


def cmd_match(args):
    records = read_records(args.records)
    notes = notes_from_rows(read_jsonl(args.notes))
    results = match_corpus(records, notes, args.min_score)
    pairs = filter_corpus(results, args.max_len, args.dedup)
    write_jsonl(args.out, [p.to_json() for p in pairs])
    log.info("%d of %d records matched; wrote %d pairs", len(results), len(records), len(pairs))


def cmd_train(args):
    config = _model_config(args)
    train = _read_examples(args.pairs)
    val = _read_examples(args.val)
    meta = {}
    if args.bpe:
        codes = _load_codes(args.bpe)
        train = [(subword.encode(codes, s), subword.encode(codes, t)) for s, t in train]
        val = [(subword.encode(codes, s), subword.encode(codes, t)) for s, t in val]
        meta["bpe_merges"] = subword.merges_to_text(codes)
    start = time.time()
    model, history = seq2seq.train_supervised(train, val, config, callback=_epoch_logger("model"))
    model.meta.update(meta)
    best = min(history, key=lambda h: h.val_loss) if history else None
    if best is not None:
        model.meta.update(best_epoch=best.epoch, best_val_loss=best.val_loss)
    seq2seq.save_checkpoint(model, args.out)
    if args.log:
        seq2seq.write_log(args.log, history)
    log.info("trained %d epochs in %.1fs -> %s", len(history), time.time() - start, args.out)


def _read_texts(path):
    texts = []
    for i, row in enumerate(read_jsonl(path), 1):
        tokens = row.get("src", row.get("sentence")) if isinstance(row, dict) else row
        if not _token_list(tokens):
            raise MedslotError(f"{path}:{i}: expected a non-empty token list")
        texts.append(tokens)
    return texts


def _read_frames(path):
    frames = []
    for i, row in enumerate(read_jsonl(path), 1):
        tokens = row.get("tgt") if isinstance(row, dict) else row
        if not _token_list(tokens):
            raise MedslotError(f"{path}:{i}: expected a linearized frame token list")
        frames.append(parse_linearized(tokens))
    return frames


def cmd_train_semi(args):
    config = _model_config(args)
    paired = _read_pairs(args.paired)
    data = dualsemi.TripleDataset(
        paired,
        _read_texts(args.text) if args.text else [],
        _read_frames(args.frames) if args.frames else [],
    )
    val = _read_pairs(args.val) if args.val else None
    cfg = dualsemi.DualConfig(
        args.alpha, args.beta, args.gamma, args.delta, args.unpaired_ratio, config, config
    )
    nlu, nlg, history = dualsemi.train_joint(data, cfg, val, callback=_epoch_logger("nlu"))
    seq2seq.save_checkpoint(nlu, args.out_nlu)
    seq2seq.save_checkpoint(nlg, args.out_nlg)
    log.info("joint training done (%d epochs)", len(history))


def cmd_predict(args):
    model = seq2seq.load_checkpoint(args.model)
    codes = model.meta.get("bpe_merges")
    bpe = subword.merges_from_text(codes) if codes else None
    pairs = _read_pairs(args.input)
    frames = seq2seq.predict_frames(model, [list(p.source_tokens) for p in pairs], bpe)
    rows = []
    for pair, frame in zip(pairs, frames):
        rows.append(SentencePair(pair.doc_id, pair.sentence_index, pair.source_tokens, frame).to_json())
    write_jsonl(args.out, rows)
    log.info("wrote %d predictions -> %s", len(rows), args.out)


def cmd_evaluate(args):
    report = evaluate(_read_pairs(args.pred), _read_pairs(args.ref))
    table = report.table(args.name)
    if args.out:
        with atomic_write(args.out) as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(table)


# -- parser ------------------------------------------------------------------


def _add_model_flags(p, epochs=70):
    d = seq2seq.ModelConfig()
    p.add_argument("--epochs", type=_positive_int, default=epochs)
    p.add_argument("--batch-size", type=_positive_int, default=d.batch_size)
    p.add_argument("--embed", type=_positive_int, default=d.embed_dim)
    p.add_argument("--hidden", type=_positive_int, default=d.hidden)
    p.add_argument("--layers", type=_positive_int, default=d.layers)
    p.add_argument("--dropout", type=_dropout, default=d.dropout)
    p.add_argument("--lr", type=_positive_float, default=d.lr)
    p.add_argument("--clip", type=_positive_float, default=d.clip_norm)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (env MEDSLOT_SEED)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--json-logs", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="medslot", parents=[common], description="Medication slot filling toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--num-docs", type=_positive_int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", parents=[common], help="documents + annotations -> sentence pairs")
    p.add_argument("--docs", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--ann-suffix", default=".ann")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    bpe = sub.add_parser("bpe", parents=[common], help="subword segmentation")
    bsub = bpe.add_subparsers(dest="bpe_command", parser_class=_Parser)
    bsub.required = True
    p = bsub.add_parser("learn", parents=[common])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--merges", type=_positive_int, default=8000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)
    p = bsub.add_parser("apply", parents=[common])
    p.add_argument("--codes", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("match", parents=[common], help="distant supervision from prescription records")
    p.add_argument("--records", required=True)
    p.add_argument("--notes", required=True)
    p.add_argument("--min-score", type=_positive_int, default=2)
    p.add_argument("--max-len", type=_positive_int, default=100)
    p.add_argument("--dedup", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("train", parents=[common], help="supervised seq2seq training")
    p.add_argument("--pairs", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bpe", help="merges file; stored inside the checkpoint")
    p.add_argument("--log", help="CSV training log")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-semi", parents=[common], help="joint NLU/NLG training")
    p.add_argument("--paired", required=True)
    p.add_argument("--text")
    p.add_argument("--frames")
    p.add_argument("--val")
    p.add_argument("--alpha", type=_unit_float, default=1.0)
    p.add_argument("--beta", type=_unit_float, default=0.1)
    p.add_argument("--gamma", type=_unit_float, default=1.0)
    p.add_argument("--delta", type=_unit_float, default=0.1)
    p.add_argument("--unpaired-ratio", type=_non_negative_int, default=1)
    p.add_argument("--out-nlu", required=True)
    p.add_argument("--out-nlg", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train_semi)

    p = sub.add_parser("predict", parents=[common], help="decode slot frames")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="per-slot precision/recall/F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out")
    p.add_argument("--name", default="model")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _resolve_seed(args):
    if hasattr(args, "seed"):
        return args.seed
    env = os.environ.get("MEDSLOT_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MEDSLOT_SEED must be an integer, got {env!r}") from None


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed = _resolve_seed(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    _setup_logging(getattr(args, "quiet", False), getattr(args, "json_logs", False))
    try:
        args.func(args)
    except DivergedTraining as exc:
        log.error("error: %s", exc)
        return EXIT_DIVERGED
    except (MedslotError, OSError, UnicodeDecodeError, ValueError) as exc:
        log.error("error: %s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
