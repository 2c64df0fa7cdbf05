"""Transformer encoder: embedding lookup plus stacked self-attention layers.

The configured depth counts the scoring head as its last layer: with
``layers = D`` the encoder runs D-1 full layers and the interaction head owns
the D-th layer's query/key projections. Sentence and relation positions see
each other with full bidirectional attention; there is no segment mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .tokenizer import EncodedInput

ABLATION_MODES = ("semantic_tokens", "fresh_placeholder")

INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 4
    heads: int = 4
    d_model: int = 64
    d_head: int = 16
    d_ff: int = 256
    dropout: float = 0.1
    max_len: int = 100
    ablation_mode: str = "semantic_tokens"

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError("need at least 2 layers: one full layer plus the scoring head")
        if self.d_model != self.heads * self.d_head:
            raise ValueError(f"d_model {self.d_model} != heads {self.heads} * d_head {self.d_head}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        if self.ablation_mode not in ABLATION_MODES:
            raise ValueError(f"ablation_mode must be one of {ABLATION_MODES}")


def _param_spec(config: EncoderConfig, vocab_size: int,
                num_relations: int) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init kind) for every parameter, in checkpoint order."""
    spec: list[tuple[str, tuple[int, ...], str]] = [
        ("embedding.token", (vocab_size, config.d_model), "weight"),
        ("embedding.position", (config.max_len, config.d_model), "weight"),
    ]
    if config.ablation_mode == "fresh_placeholder":
        spec.append(("embedding.relation_placeholder",
                     (num_relations, config.d_model), "weight"))
    for i in range(config.layers - 1):
        for t in range(config.heads):
            for proj in ("wq", "wk", "wv"):
                spec.append((f"layer{i}.head{t}.{proj}",
                             (config.d_model, config.d_head), "weight"))
            for proj in ("bq", "bk", "bv"):
                spec.append((f"layer{i}.head{t}.{proj}", (config.d_head,), "zero"))
        spec.append((f"layer{i}.attn_out.w", (config.d_model, config.d_model), "weight"))
        spec.append((f"layer{i}.attn_out.b", (config.d_model,), "zero"))
        spec.append((f"layer{i}.norm1.gain", (config.d_model,), "one"))
        spec.append((f"layer{i}.norm1.bias", (config.d_model,), "zero"))
        spec.append((f"layer{i}.ffn.w1", (config.d_model, config.d_ff), "weight"))
        spec.append((f"layer{i}.ffn.b1", (config.d_ff,), "zero"))
        spec.append((f"layer{i}.ffn.w2", (config.d_ff, config.d_model), "weight"))
        spec.append((f"layer{i}.ffn.b2", (config.d_model,), "zero"))
        spec.append((f"layer{i}.norm2.gain", (config.d_model,), "one"))
        spec.append((f"layer{i}.norm2.bias", (config.d_model,), "zero"))
    for t in range(config.heads):
        spec.append((f"score.head{t}.wq", (config.d_model, config.d_head), "weight"))
        spec.append((f"score.head{t}.wk", (config.d_model, config.d_head), "weight"))
    return spec


def expected_shapes(config: EncoderConfig, vocab_size: int,
                    num_relations: int) -> dict[str, tuple[int, ...]]:
    return {name: shape for name, shape, _ in _param_spec(config, vocab_size, num_relations)}


class ModelParams:
    """Named parameter tensors for the encoder and the scoring head."""

    def __init__(self, config: EncoderConfig, vocab_size: int, num_relations: int,
                 tensors: dict[str, Tensor]):
        self.config = config
        self.vocab_size = vocab_size
        self.num_relations = num_relations
        expected = expected_shapes(config, vocab_size, num_relations)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ValueError(f"parameter set mismatch: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"parameter '{name}' has shape {tensors[name].shape}, "
                                 f"expected {shape}")
        # keep checkpoint order
        self.tensors = {name: tensors[name] for name in expected}

    @classmethod
    def init(cls, config: EncoderConfig, vocab_size: int, num_relations: int,
             seed: int = 0, dtype=np.float32) -> "ModelParams":
        """Fresh parameters: normal(0, 0.02) weights, zero biases, unit gains."""
        rng = np.random.default_rng(seed)
        tensors: dict[str, Tensor] = {}
        for name, shape, kind in _param_spec(config, vocab_size, num_relations):
            if kind == "weight":
                data = rng.normal(0.0, INIT_STD, shape).astype(dtype)
            elif kind == "zero":
                data = np.zeros(shape, dtype=dtype)
            else:
                data = np.ones(shape, dtype=dtype)
            tensors[name] = Tensor(data, requires_grad=True)
        return cls(config, vocab_size, num_relations, tensors)

    @property
    def dtype(self):
        return self.tensors["embedding.token"].dtype

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def trainable(self) -> list[Tensor]:
        return list(self.tensors.values())


@dataclass
class EncoderState:
    """Input embedding plus the hidden state after each full layer."""
    embedding: Tensor
    hidden: list[Tensor] = field(default_factory=list)

    @property
    def final(self) -> Tensor:
        """The state the interaction head scores from."""
        return self.hidden[-1] if self.hidden else self.embedding


def embed(encoded: EncodedInput, params: ModelParams) -> Tensor:
    """Token embedding plus learned absolute position embedding per row.

    In fresh_placeholder mode the relation positions read a separate table
    indexed by relation id, detaching them from the verbal words.
    """
    ids = np.asarray(encoded.ids, dtype=np.intp)
    if ids.size and ids.max() >= params.vocab_size:
        raise IndexError(f"token id {ids.max()} out of range for vocab of "
                         f"{params.vocab_size}")
    token_table = params["embedding.token"]
    if params.config.ablation_mode == "fresh_placeholder":
        sentence = T.embedding_rows(token_table, ids[:encoded.n])
        relations = T.embedding_rows(params["embedding.relation_placeholder"],
                                     np.arange(encoded.m))
        rows = T.concat_rows([sentence, relations])
    else:
        rows = T.embedding_rows(token_table, ids)
    positions = T.embedding_rows(params["embedding.position"], np.arange(encoded.size))
    return rows + positions


def attention(q: Tensor, k: Tensor, v: Tensor, *, dropout_p: float = 0.0,
              training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Scaled dot-product attention over one head: softmax(QK^T/sqrt(d)) V."""
    d = k.shape[1]
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d))
    probs = T.softmax_rows(scores)
    probs = T.dropout(probs, dropout_p, training, rng)
    return T.matmul(probs, v)


def encode(encoded: EncodedInput, params: ModelParams, *, training: bool = False,
           rng: np.random.Generator | None = None) -> EncoderState:
    """Run the D-1 full layers over the concatenated input."""
    cfg = params.config
    if encoded.size > cfg.max_len:
        raise ValueError(f"sequence of length {encoded.size} exceeds max_len {cfg.max_len}")
    h = embed(encoded, params)
    state = EncoderState(embedding=h)
    p = cfg.dropout
    for i in range(cfg.layers - 1):
        head_outputs = []
        for t in range(cfg.heads):
            prefix = f"layer{i}.head{t}"
            q = T.matmul(h, params[f"{prefix}.wq"]) + params[f"{prefix}.bq"]
            k = T.matmul(h, params[f"{prefix}.wk"]) + params[f"{prefix}.bk"]
            v = T.matmul(h, params[f"{prefix}.wv"]) + params[f"{prefix}.bv"]
            head_outputs.append(attention(q, k, v, dropout_p=p, training=training, rng=rng))
        merged = T.matmul(T.concat_cols(head_outputs), params[f"layer{i}.attn_out.w"])
        merged = merged + params[f"layer{i}.attn_out.b"]
        merged = T.dropout(merged, p, training, rng)
        h = T.layer_norm(h + merged, params[f"layer{i}.norm1.gain"],
                         params[f"layer{i}.norm1.bias"])
        ff = T.gelu(T.matmul(h, params[f"layer{i}.ffn.w1"]) + params[f"layer{i}.ffn.b1"])
        ff = T.matmul(ff, params[f"layer{i}.ffn.w2"]) + params[f"layer{i}.ffn.b2"]
        ff = T.dropout(ff, p, training, rng)
        h = T.layer_norm(h + ff, params[f"layer{i}.norm2.gain"],
                         params[f"layer{i}.norm2.bias"])
        state.hidden.append(h)
    return state
