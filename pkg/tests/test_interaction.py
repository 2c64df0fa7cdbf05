import csv
import math

import numpy as np
import pytest

from relmap import tensor as T
from relmap.dataset import GoldMap
from relmap.encoder import EncoderConfig, EncoderState, ModelParams, encode
from relmap.interaction import (InteractionMap, audit_score_allocations, load_pgm,
                                map_loss, map_to_csv, map_to_pgm, predict_cells,
                                score_map, to_probs)
from relmap.tokenizer import EncodedInput


def scalar_head_params():
    cfg = EncoderConfig(layers=2, heads=1, d_model=1, d_head=1, d_ff=2, dropout=0.0,
                        max_len=8)
    return ModelParams.init(cfg, vocab_size=4, num_relations=1, dtype=np.float64)


def tiny_setup(n=3, m=3, seed=0):
    cfg = EncoderConfig(layers=2, heads=2, d_model=8, d_head=4, d_ff=16, dropout=0.0,
                        max_len=16)
    params = ModelParams.init(cfg, vocab_size=12, num_relations=m, seed=seed,
                              dtype=np.float64)
    encoded = EncodedInput(tuple(range(2, 2 + n)) + tuple(range(8, 8 + m)), n, m)
    return params, encoded


def gold_from(cells):
    arr = np.asarray(cells, dtype=bool)
    return GoldMap(1, arr.shape[0] - 1, arr)


def test_score_map_shape():
    params, encoded = tiny_setup(n=4, m=3)
    logits = score_map(encode(encoded, params), params)
    assert logits.shape == (7, 7)


def test_score_map_single_head_hand_case():
    params = scalar_head_params()
    wq, wk = 0.7, -1.3
    params["score.head0.wq"].data[:] = wq
    params["score.head0.wk"].data[:] = wk
    h = T.Tensor(np.asarray([[1.0], [2.0], [-1.0]]))
    state = EncoderState(embedding=h, hidden=[h])
    logits = score_map(state, params)
    rows = np.asarray([1.0, 2.0, -1.0])
    expected = np.outer(rows * wq, rows * wk)  # d_head 1: scale factor is 1
    assert np.allclose(logits.data, expected, atol=1e-12)


def test_zero_query_weights_give_half_probability():
    params, encoded = tiny_setup()
    for t in range(params.config.heads):
        params[f"score.head{t}.wq"].data[:] = 0.0
    imap = to_probs(score_map(encode(encoded, params), params))
    assert np.allclose(imap.probs, 0.5)


class TestThreshold:
    def test_boundary_is_strict(self):
        imap = InteractionMap(np.asarray([[0.5]]), threshold=0.5)
        assert not predict_cells(imap)[0, 0]

    def test_high_logit_fires(self):
        prob = 1.0 / (1.0 + math.exp(-3.0))
        assert prob == pytest.approx(0.9526, abs=1e-4)
        imap = InteractionMap(np.asarray([[prob]]), threshold=0.5)
        assert predict_cells(imap)[0, 0]

    def test_high_threshold_blocks(self):
        imap = InteractionMap(np.asarray([[0.95]]), threshold=0.99)
        assert not predict_cells(imap)[0, 0]

    def test_threshold_domain(self):
        with pytest.raises(ValueError):
            InteractionMap(np.zeros((2, 2)), threshold=1.0)
        with pytest.raises(ValueError):
            InteractionMap(np.zeros((2, 2)), threshold=0.0)


class TestLoss:
    def test_all_zero_logits_all_false_gold(self):
        logits = T.Tensor(np.zeros((4, 4)))
        loss = map_loss(logits, gold_from(np.zeros((4, 4), dtype=bool)))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_two_by_two_closed_form(self):
        logits = T.Tensor(np.asarray([[2.0, 0.0], [0.0, -2.0]]))
        gold = gold_from([[True, False], [False, False]])
        expected = (2 * math.log(1 + math.exp(-2.0)) + 2 * math.log(2.0)) / 4.0
        assert expected == pytest.approx(0.4100, abs=1e-4)
        assert map_loss(logits, gold).item() == pytest.approx(expected, abs=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            map_loss(T.Tensor(np.zeros((3, 3))), gold_from(np.zeros((2, 2), dtype=bool)))

    def test_strictly_positive_for_finite_logits(self, rng):
        for _ in range(10):
            size = int(rng.integers(1, 6))
            logits = T.Tensor(rng.normal(scale=5.0, size=(size, size)))
            cells = rng.random((size, size)) > 0.5
            assert map_loss(logits, GoldMap(1, size - 1, cells)).item() > 0.0

    def test_loss_decreases_under_gradient_descent(self):
        params, encoded = tiny_setup()
        gold = GoldMap(3, 3, np.zeros((6, 6), dtype=bool))
        gold.cells[0, 2] = gold.cells[2, 0] = True
        gold.cells[0, 3 + 1] = True
        gold.cells[3 + 1, 2] = True
        losses = []
        for _ in range(50):
            T.zero_grads(params.trainable())
            loss = map_loss(score_map(encode(encoded, params), params), gold)
            loss.backward()
            losses.append(loss.item())
            for t in params.trainable():
                if t.grad is not None:
                    t.data -= 0.15 * t.grad
        violations = sum(1 for a, b in zip(losses, losses[1:]) if b > a + 1e-12)
        assert violations <= 2, f"{violations} increases across 50 steps: {losses[:5]}..."
        assert losses[-1] < losses[0]


def test_gradient_reaches_encoder_parameters():
    params, encoded = tiny_setup()
    gold = GoldMap(3, 3, np.eye(6, dtype=bool) * False)
    gold.cells[0, 4] = True
    T.zero_grads(params.trainable())
    loss = map_loss(score_map(encode(encoded, params), params), gold)
    loss.backward()
    for name in ("embedding.token", "layer0.head0.wv", "layer0.ffn.w2"):
        grad = params[name].grad
        assert grad is not None and np.abs(grad).max() > 0.0, name


class TestAllocationAudit:
    @pytest.mark.parametrize("n,m", [(9, 3), (5, 1), (12, 4)])
    def test_single_square_matrix_no_cube(self, n, m):
        params, _ = tiny_setup(n=3, m=m)
        encoded = EncodedInput(tuple([2] * n) + tuple(range(8, 8 + m)), n, m)
        state = encode(encoded, params)
        size = n + m
        with audit_score_allocations() as shapes:
            logits = score_map(state, params)
        assert logits.shape == (size, size)
        assert all(len(s) <= 2 for s in shapes), "3-D structure allocated"
        squares = [s for s in shapes if s == (size, size)]
        assert len(squares) == 1
        d_model = params.config.d_model
        others = [s for s in shapes if s != (size, size)]
        assert all(int(np.prod(s)) <= size * d_model for s in others)
        if n * m * n > size * size:
            # the regime where the per-relation table would be the bigger object
            assert all(int(np.prod(s)) < n * m * n for s in shapes)


class TestExports:
    def test_csv_headers_and_values(self, tmp_path):
        imap = InteractionMap(np.asarray([[0.25, 0.75], [1.0, 0.0]]))
        path = tmp_path / "map.csv"
        map_to_csv(imap, ["tok", "word"], path)
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["", "tok", "word"]
        assert rows[1][0] == "tok" and float(rows[1][2]) == 0.75
        assert rows[2][0] == "word" and float(rows[2][1]) == 1.0

    def test_csv_label_count_checked(self, tmp_path):
        with pytest.raises(ValueError):
            map_to_csv(InteractionMap(np.zeros((2, 2))), ["only-one"], tmp_path / "x.csv")

    def test_pgm_roundtrip_values(self, tmp_path):
        probs = np.asarray([[0.0, 0.5], [0.25, 1.0]])
        path = tmp_path / "map.pgm"
        map_to_pgm(InteractionMap(probs), path)
        pixels = load_pgm(path)
        assert pixels.dtype == np.uint8
        assert np.array_equal(pixels, np.rint(probs * 255).astype(np.uint8))
