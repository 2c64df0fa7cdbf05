"""Command-line pipeline: synthesize data, train, predict, evaluate, inspect,
and benchmark. One subcommand per process; RELMAP_THREADS caps ingestion
worker threads."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import (DatasetError, EntitySpan, Triple, anchor_triples,
                      load_dataset, load_relation_map, save_dataset,
                      save_relation_map, tokenize)
from .decoder import triples_to_json
from .encoder import EncoderConfig, ModelParams, encode
from .evaluation import bench, breakdown, render_report, report_json
from .interaction import (map_to_csv, map_to_pgm, score_map, to_probs)
from .synthetic import SynthConfig, make_synthetic
from .tokenizer import build_vocab, encode_concat
from .trainer import (CheckpointError, TrainConfig, load_pipeline, predict_triples,
                      prepare_examples, save_checkpoint, train)


def worker_count() -> int:
    env = os.environ.get("RELMAP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise DatasetError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DatasetError(f"config {path} is not valid JSON: {err}") from err


def _ingest(data_path, schema, max_seq_len: int):
    sentences, report = load_dataset(data_path, schema, max_seq_len=max_seq_len,
                                     workers=worker_count())
    print(json.dumps(report.to_json(), sort_keys=True), file=sys.stderr)
    return sentences


def cmd_make_synthetic(args) -> int:
    cfg = SynthConfig(relations=args.relations, sentences=args.sentences,
                      vocab=args.vocab, max_triples=args.max_triples,
                      overlap_mix=tuple(args.overlap_mix.split(",")),
                      seed=args.seed, max_entity_tokens=args.max_entity_tokens)
    result = make_synthetic(cfg)
    save_dataset(result.records, args.out_data)
    save_relation_map(result.schema, args.out_relmap)
    print(f"wrote {len(result.records)} sentences to {args.out_data} and "
          f"{result.schema.size} relations to {args.out_relmap}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    encoder_cfg = EncoderConfig(**config.get("encoder", {}))
    train_kwargs = dict(config.get("train", {}))
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    train_cfg = TrainConfig(**train_kwargs)
    dtype = {"f32": np.float32, "f64": np.float64}[config.get("dtype", "f32")]

    schema = load_relation_map(args.relmap)
    sentences = _ingest(args.data, schema, encoder_cfg.max_len)
    if not sentences:
        raise DatasetError(f"no usable sentences in {args.data}")
    vocab = build_vocab(sentences, schema, min_freq=config.get("min_freq", 1))
    examples = prepare_examples(sentences, schema, vocab)
    dev = None
    if args.dev:
        dev_sentences = _ingest(args.dev, schema, encoder_cfg.max_len)
        dev = prepare_examples(dev_sentences, schema, vocab)

    params = ModelParams.init(encoder_cfg, vocab.size, schema.size,
                              seed=train_cfg.seed, dtype=dtype)
    log_path = args.log or f"{args.out_checkpoint}.log.jsonl"
    train(params, examples, train_cfg, dev=dev, log_path=log_path, echo=True)
    save_checkpoint(params, args.out_checkpoint, extra={
        "vocab": list(vocab.tokens),
        "schema": [list(pair) for pair in schema.relations],
        "threshold": train_cfg.threshold,
        "train": train_cfg.__dict__,
    })
    print(f"checkpoint written to {args.out_checkpoint}; log at {log_path}")
    return 0


def cmd_predict(args) -> int:
    params, meta, vocab, schema = load_pipeline(args.checkpoint)
    threshold = args.threshold if args.threshold is not None else meta.get("threshold", 0.5)
    sentences = _ingest(args.data, schema, params.config.max_len)
    labels = [label for label, _ in schema.relations]
    records = []
    for sent in sentences:
        encoded = encode_concat(sent.tokens, schema, vocab)
        triples = predict_triples(params, encoded, threshold)
        records.append(triples_to_json(sent, triples, labels))
    save_dataset(records, args.out)
    print(f"wrote predictions for {len(records)} sentences to {args.out}")
    return 0


def _load_predictions(path, schema) -> list[tuple[str, set[Triple]]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        triples = set()
        spans = obj.get("spans")
        if spans is None or len(spans) != len(obj["triple_list"]):
            raise DatasetError(f"{path}:{lineno}: predictions need a spans entry per triple")
        for (subj, rel, obj_str), ((sh, st), (oh, ot)) in zip(obj["triple_list"], spans):
            triples.add(Triple(EntitySpan(sh, st), schema.id_of(rel), EntitySpan(oh, ot)))
        out.append((obj["text"], triples))
    return out


def cmd_eval(args) -> int:
    schema = load_relation_map(args.relmap)
    gold_sentences = _ingest(args.gold, schema, args.max_len)
    predictions = _load_predictions(args.pred, schema)
    if len(predictions) != len(gold_sentences):
        raise DatasetError(f"{args.pred} has {len(predictions)} sentences but "
                           f"{args.gold} yields {len(gold_sentences)}")
    for (text, _), sent in zip(predictions, gold_sentences):
        if text != sent.text:
            raise DatasetError(f"prediction/gold text mismatch at: {text!r}")
    predicted = [p for _, p in predictions]
    gold = [anchor_triples(s) for s in gold_sentences]
    report = breakdown(predicted, gold, gold_sentences)
    print(render_report(report))
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(report_json(report), indent=2,
                                                  sort_keys=True), encoding="utf-8")
    return 0


def cmd_inspect_map(args) -> int:
    if not args.out_csv and not args.out_pgm:
        raise DatasetError("inspect-map needs --out-csv and/or --out-pgm")
    params, meta, vocab, schema = load_pipeline(args.checkpoint)
    threshold = args.threshold if args.threshold is not None else meta.get("threshold", 0.5)
    tokens = tokenize(args.sentence)
    if not tokens:
        raise DatasetError("cannot inspect an empty sentence")
    encoded = encode_concat(tokens, schema, vocab)
    state = encode(encoded, params, training=False)
    imap = to_probs(score_map(state, params), threshold)
    labels = list(tokens) + [word for _, word in schema.relations]
    if args.out_csv:
        map_to_csv(imap, labels, args.out_csv)
        print(f"wrote {imap.size}x{imap.size} probability grid to {args.out_csv}")
    if args.out_pgm:
        map_to_pgm(imap, args.out_pgm)
        print(f"wrote grayscale map to {args.out_pgm}")
    return 0


def cmd_bench(args) -> int:
    params, meta, vocab, schema = load_pipeline(args.checkpoint)
    sentences = _ingest(args.data, schema, params.config.max_len)
    examples = prepare_examples(sentences, schema, vocab)
    train_cfg = TrainConfig(**meta["train"]) if "train" in meta else TrainConfig()
    result = bench(params, examples, args.mode, train_config=train_cfg,
                   repeats=args.repeats, threshold=meta.get("threshold", 0.5))
    runs = ", ".join(f"{v:.3f}" for v in result.runs)
    print(f"{result.mode}: {result.value:.3f} {result.unit} over {len(examples)} "
          f"sentences (runs: {runs})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relmap",
                                     description="Relational triple extraction "
                                                 "via a token/relation interaction map")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a synthetic corpus")
    p.add_argument("--relations", type=int, required=True)
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--max-triples", type=int, default=3)
    p.add_argument("--overlap-mix", default="normal,seo,epo,soo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-entity-tokens", type=int, default=1)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-relmap", required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--relmap", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--dev")
    p.add_argument("--log")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode triples for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--relmap", required=True)
    p.add_argument("--max-len", type=int, default=100)
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-map", help="export the predicted map for a sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--out-pgm")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_inspect_map)

    p = sub.add_parser("bench", help="timing: seconds/epoch or ms/sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("train_epoch", "inference"), required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, CheckpointError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
