import json
import struct

import numpy as np
import pytest

from relmap.dataset import AnnotatedSentence, EntitySpan, RelationSchema, Triple
from relmap.encoder import EncoderConfig, ModelParams
from relmap.tokenizer import build_vocab
from relmap.trainer import (Adam, CheckpointError, NonFiniteLossError, TrainConfig,
                            evaluate_f1, load_checkpoint, load_pipeline,
                            predict_triples, prepare_examples, save_checkpoint, train)

SCHEMA = RelationSchema((("holds", "holds"), ("feeds", "feeds")))

CFG = EncoderConfig(layers=2, heads=2, d_model=8, d_head=4, d_ff=16, dropout=0.1,
                    max_len=20)


def corpus():
    rows = [
        ("alpha holds beta", [("alpha", 0, "beta")]),
        ("gamma feeds delta now", [("gamma", 1, "delta")]),
        ("alpha feeds delta", [("alpha", 1, "delta")]),
        ("beta holds gamma today", [("beta", 0, "gamma")]),
    ]
    sentences = []
    for text, triples in rows:
        tokens = tuple(text.split())
        resolved = tuple(Triple(EntitySpan.single(tokens.index(s)), r,
                                EntitySpan.single(tokens.index(o)))
                         for s, r, o in triples)
        sentences.append(AnnotatedSentence(text, tokens, resolved))
    return sentences


def fresh_setup(dropout=0.1, seed=0):
    sentences = corpus()
    vocab = build_vocab(sentences, SCHEMA)
    cfg = EncoderConfig(**{**CFG.__dict__, "dropout": dropout})
    params = ModelParams.init(cfg, vocab.size, SCHEMA.size, seed=seed, dtype=np.float64)
    examples = prepare_examples(sentences, SCHEMA, vocab)
    return params, examples, vocab


def snapshot(params):
    return {name: t.data.copy() for name, t in params.named()}


def test_zero_learning_rate_keeps_parameters_bit_identical():
    params, examples, _ = fresh_setup()
    before = snapshot(params)
    train(params, examples, TrainConfig(learning_rate=0.0, epochs=1, batch_size=1, seed=1))
    for name, t in params.named():
        assert np.array_equal(before[name], t.data), name


def test_fixed_seed_reproduces_loss_curve():
    params_a, examples, _ = fresh_setup()
    log_a = train(params_a, examples, TrainConfig(epochs=3, batch_size=2, seed=9))
    params_b, examples_b, _ = fresh_setup()
    log_b = train(params_b, examples_b, TrainConfig(epochs=3, batch_size=2, seed=9))
    assert [r["loss"] for r in log_a] == [r["loss"] for r in log_b]
    for name, t in params_a.named():
        assert np.array_equal(t.data, params_b[name].data)


def test_different_seed_changes_trajectory():
    params_a, examples, _ = fresh_setup()
    log_a = train(params_a, examples, TrainConfig(epochs=3, batch_size=2, seed=1))
    params_b, examples_b, _ = fresh_setup()
    log_b = train(params_b, examples_b, TrainConfig(epochs=3, batch_size=2, seed=2))
    assert [r["loss"] for r in log_a] != [r["loss"] for r in log_b]


def test_decay_exclusion_for_biases_and_norms():
    # zero gradients: the Adam update vanishes and only decay can move weights
    params, _, _ = fresh_setup()
    before = snapshot(params)
    config = TrainConfig(learning_rate=0.5, weight_decay=0.01)
    adam = Adam(params, config)
    for t in params.trainable():
        t.grad = np.zeros_like(t.data)
    adam.step()
    for name, t in params.named():
        if t.data.ndim >= 2:
            assert np.allclose(t.data, before[name] * (1.0 - 0.5 * 0.01)), name
        else:
            assert np.array_equal(t.data, before[name]), name


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_nonfinite_loss_aborts_with_batch_diagnostic():
    params, examples, _ = fresh_setup(dropout=0.0)
    params["embedding.token"].data[:] = np.nan
    with pytest.raises(NonFiniteLossError, match=r"epoch 1, batch 0"):
        train(params, examples, TrainConfig(epochs=1, batch_size=2, seed=0))


def test_empty_dataset_rejected():
    params, _, _ = fresh_setup()
    with pytest.raises(ValueError):
        train(params, [], TrainConfig(epochs=1))


def test_eval_every_logs_f1(tmp_path):
    params, examples, _ = fresh_setup(dropout=0.0)
    log_path = tmp_path / "log.jsonl"
    records = train(params, examples, TrainConfig(epochs=4, batch_size=2, seed=0,
                                                  eval_every=2), log_path=log_path)
    assert [("dev_f1" in r) for r in records] == [False, True, False, True]
    lines = [json.loads(l) for l in log_path.read_text().splitlines()]
    assert lines == records


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_predict_triples_runs_end_to_end():
    params, examples, _ = fresh_setup(dropout=0.0)
    predictions = predict_triples(params, examples[0].encoded, 0.5)
    assert isinstance(predictions, set)
    assert evaluate_f1(params, examples) >= 0.0


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        params, _, vocab = fresh_setup()
        path = tmp_path / "model.rmk"
        save_checkpoint(params, path, extra={"vocab": list(vocab.tokens),
                                             "schema": [list(p) for p in SCHEMA.relations],
                                             "threshold": 0.5})
        loaded, meta = load_checkpoint(path)
        assert meta["threshold"] == 0.5
        assert loaded.config == params.config
        for name, t in params.named():
            assert np.array_equal(t.data, loaded[name].data), name
        _, _, vocab_back, schema_back = load_pipeline(path)
        assert vocab_back == vocab and schema_back == SCHEMA

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bogus.rmk"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        params, _, _ = fresh_setup()
        path = tmp_path / "model.rmk"
        save_checkpoint(params, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_config_tensor_shape_mismatch_names_tensor(self, tmp_path):
        # config block claims a wider model than the stored tensors
        params, _, _ = fresh_setup()
        path = tmp_path / "model.rmk"
        save_checkpoint(params, path)
        raw = path.read_bytes()
        blob_len, = struct.unpack("<I", raw[4:8])
        meta = json.loads(raw[8:8 + blob_len])
        meta["encoder"]["d_model"] = 16
        meta["encoder"]["d_head"] = 8
        doctored = json.dumps(meta, sort_keys=True).encode("utf-8")
        path.write_bytes(b"RMK1" + struct.pack("<I", len(doctored)) + doctored
                         + raw[8 + blob_len:])
        with pytest.raises(CheckpointError, match="embedding.token"):
            load_checkpoint(path)


def test_batching_groups_by_length():
    from relmap.trainer import _batches

    params, examples, _ = fresh_setup()
    rng = np.random.default_rng(0)
    batches = _batches(examples, 2, rng)
    assert sorted(i for b in batches for i in b) == list(range(len(examples)))
    for batch in batches:
        lengths = [len(examples[i].sentence.tokens) for i in batch]
        assert lengths == sorted(lengths)
