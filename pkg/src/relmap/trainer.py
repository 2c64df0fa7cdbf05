"""Mini-batch training with Adam plus decoupled weight decay, checkpointing.

Training is owned by a single thread and fully determined by (seed, data,
config): shuffling, dropout and parameter init each draw from their own
seeded stream. Sentences are bucketed by length inside each epoch; every
sentence scores its own (N+M)^2 map, so batches never pad.
"""

from __future__ import annotations

import json
import math
import struct
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .dataset import (AnnotatedSentence, GoldMap, RelationSchema, Triple,
                      anchor_triples, build_gold_map)
from .decoder import decode_single
from .encoder import EncoderConfig, ModelParams, encode, expected_shapes
from .evaluation import micro_prf
from .interaction import map_loss, predict_cells, score_map, to_probs
from .tokenizer import EncodedInput, Vocab, encode_concat

CHECKPOINT_MAGIC = b"RMK1"


class NonFiniteLossError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    eval_every: int = 0
    threshold: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        # lr == 0 is allowed so a zero step can be exercised directly
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass(frozen=True)
class Example:
    """One training/eval unit: sentence, encoded input and gold map."""
    sentence: AnnotatedSentence
    encoded: EncodedInput
    gold: GoldMap

    @property
    def gold_anchor_triples(self) -> set[Triple]:
        return anchor_triples(self.sentence)


def prepare_examples(sentences: Sequence[AnnotatedSentence], schema: RelationSchema,
                     vocab: Vocab) -> list[Example]:
    out = []
    for sent in sentences:
        encoded = encode_concat(sent.tokens, schema, vocab)
        out.append(Example(sent, encoded, build_gold_map(sent, schema.size)))
    return out


class Adam:
    """Adam with decoupled weight decay applied to weight matrices only;
    biases and layer-norm parameters (all 1-D tensors) never decay."""

    def __init__(self, params: ModelParams, config: TrainConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.named()}

    def step(self) -> None:
        cfg = self.config
        self.step_count += 1
        bias_fix1 = 1.0 - cfg.adam_beta1 ** self.step_count
        bias_fix2 = 1.0 - cfg.adam_beta2 ** self.step_count
        for name, t in self.params.named():
            g = t.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * (g * g)
            if cfg.learning_rate == 0.0:
                continue
            update = (m / bias_fix1) / (np.sqrt(v / bias_fix2) + cfg.adam_eps)
            t.data -= cfg.learning_rate * update
            if cfg.weight_decay and t.data.ndim >= 2:
                t.data -= cfg.learning_rate * cfg.weight_decay * t.data


def _batches(examples: Sequence[Example], batch_size: int,
             rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, bucket by sentence length, then shuffle the batch order."""
    order = rng.permutation(len(examples))
    order = sorted(order, key=lambda i: len(examples[i].sentence.tokens))
    chunks = [list(order[i:i + batch_size]) for i in range(0, len(order), batch_size)]
    rng.shuffle(chunks)
    return chunks


def predict_triples(params: ModelParams, encoded: EncodedInput,
                    threshold: float = 0.5) -> set[Triple]:
    state = encode(encoded, params, training=False)
    imap = to_probs(score_map(state, params), threshold)
    return decode_single(predict_cells(imap), encoded.n, encoded.m)


def evaluate_f1(params: ModelParams, examples: Sequence[Example],
                threshold: float = 0.5) -> float:
    predicted = [predict_triples(params, ex.encoded, threshold) for ex in examples]
    gold = [ex.gold_anchor_triples for ex in examples]
    return micro_prf(predicted, gold).f1


def train(params: ModelParams, examples: Sequence[Example], config: TrainConfig,
          dev: Sequence[Example] | None = None, log_path=None,
          echo: bool = False) -> list[dict]:
    """Optimize in place; returns the per-epoch log records."""
    if not examples:
        raise ValueError("training needs a nonempty dataset")
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    adam = Adam(params, config)
    records: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            epoch_loss = 0.0
            for batch_index, batch in enumerate(_batches(examples, config.batch_size,
                                                         shuffle_rng)):
                T.zero_grads(params.trainable())
                inv = 1.0 / len(batch)
                for i in batch:
                    ex = examples[i]
                    state = encode(ex.encoded, params, training=True, rng=dropout_rng)
                    loss = map_loss(score_map(state, params), ex.gold)
                    value = loss.item()
                    if not math.isfinite(value):
                        raise NonFiniteLossError(
                            f"non-finite loss {value} at epoch {epoch}, "
                            f"batch {batch_index} (sentence index {i})")
                    epoch_loss += value
                    T.backward(T.scale(loss, inv))
                adam.step()
            record = {"epoch": epoch, "loss": epoch_loss / len(examples)}
            if config.eval_every and epoch % config.eval_every == 0:
                record["dev_f1"] = evaluate_f1(params, dev if dev is not None else examples,
                                               config.threshold)
            records.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if echo:
                line = f"epoch {record['epoch']:4d}  loss {record['loss']:.6f}"
                if "dev_f1" in record:
                    line += f"  dev_f1 {record['dev_f1']:.4f}"
                print(line, file=sys.stdout)
    finally:
        if log_fh:
            log_fh.close()
    return records


def _dtype_name(dtype) -> str:
    return {np.dtype(np.float64): "f64", np.dtype(np.float32): "f32"}[np.dtype(dtype)]


def _dtype_from_name(name: str):
    try:
        return {"f64": np.float64, "f32": np.float32}[name]
    except KeyError:
        raise CheckpointError(f"unknown dtype name {name!r}") from None


def save_checkpoint(params: ModelParams, path, extra: dict | None = None) -> None:
    """Versioned container: magic, config JSON block, then named tensors."""
    meta = {
        "encoder": params.config.__dict__,
        "vocab_size": params.vocab_size,
        "num_relations": params.num_relations,
        "dtype": _dtype_name(params.dtype),
    }
    if extra:
        meta.update(extra)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, t in params.named():
            T.write_named_array(fh, name, t.data)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Rebuild parameters, validating magic and per-tensor shape agreement."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad checkpoint magic {magic!r}")
        try:
            blob_len, = struct.unpack("<I", T._read_exact(fh, 4))
            meta = json.loads(T._read_exact(fh, blob_len).decode("utf-8"))
            count, = struct.unpack("<I", T._read_exact(fh, 4))
            loaded = dict(T.read_named_array(fh) for _ in range(count))
        except ValueError as err:
            raise CheckpointError(f"{path}: {err}") from err
    config = EncoderConfig(**meta["encoder"])
    dtype = _dtype_from_name(meta["dtype"])
    expected = expected_shapes(config, meta["vocab_size"], meta["num_relations"])
    tensors = {}
    for name, shape in expected.items():
        if name not in loaded:
            raise CheckpointError(f"{path}: checkpoint is missing tensor '{name}'")
        arr = loaded.pop(name)
        if arr.shape != shape:
            raise CheckpointError(f"{path}: tensor '{name}' has shape {arr.shape}, "
                                  f"config expects {shape}")
        tensors[name] = T.Tensor(arr.astype(dtype), requires_grad=True)
    if loaded:
        raise CheckpointError(f"{path}: unexpected tensor '{next(iter(loaded))}'")
    params = ModelParams(config, meta["vocab_size"], meta["num_relations"], tensors)
    return params, meta


def load_pipeline(path) -> tuple[ModelParams, dict, Vocab, RelationSchema]:
    """Checkpoint plus its embedded vocabulary and relation schema."""
    params, meta = load_checkpoint(path)
    if "vocab" not in meta or "schema" not in meta:
        raise CheckpointError(f"{path}: checkpoint lacks embedded vocab/schema")
    vocab = Vocab(tuple(meta["vocab"]))
    schema = RelationSchema(tuple((lab, word) for lab, word in meta["schema"]))
    return params, meta, vocab, schema
