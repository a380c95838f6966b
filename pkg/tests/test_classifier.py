"""Emotion-group classification head and its training loop."""

import math

import numpy as np
import pytest

from empachat.classifier import (
    GROUP_INDEX,
    ClassifierConfig,
    accuracy,
    classifier_from_donor,
    classifier_loss,
    predict_groups,
    train_classifier,
    _batches,
)
from empachat.data import GROUPS
from empachat.model import (
    CLASSIFIER_KIND,
    ENCODER_KIND,
    ClassifierModel,
    ModelConfig,
    arrays_from_tensors,
    encoder_manifest,
    init_parameters,
)
from empachat.tensor import Tensor
from empachat.tokenizer import CLS_ID, SEP_ID, build_vocab, encode

CFG = ModelConfig(vocab_size=40, hidden_dim=16, num_layers=1, num_heads=2,
                  ffn_dim=32, max_len=10, dropout_rate=0.0)


class TestGroupIndex:
    def test_covers_all_groups_in_order(self):
        assert list(GROUP_INDEX) == list(GROUPS)
        assert sorted(GROUP_INDEX.values()) == list(range(6))


class TestClassifierLoss:
    def test_zero_params_give_log_num_groups(self):
        params = init_parameters(CLASSIFIER_KIND, CFG, seed=0)
        for p in params.values():
            p.data[...] = 0.0
        model = ClassifierModel(CFG, params)
        ids = np.array([[CLS_ID, 12, SEP_ID], [CLS_ID, 13, SEP_ID]])
        loss = classifier_loss(model, ids, np.array([0, 4]), train_mode=False)
        np.testing.assert_allclose(loss.item(), math.log(6), atol=1e-12)

    def test_matches_hand_nll(self):
        params = init_parameters(CLASSIFIER_KIND, CFG, seed=1)
        model = ClassifierModel(CFG, params)
        ids = np.array([[CLS_ID, 14, SEP_ID]])
        labels = np.array([2])
        loss = classifier_loss(model, ids, labels, train_mode=False)
        from empachat import tensor as T
        with T.no_grad():
            logits = model.logits(ids).data[0]
        lse = np.log(np.exp(logits - logits.max()).sum()) + logits.max()
        np.testing.assert_allclose(loss.item(), lse - logits[2], atol=1e-10)


class TestPrediction:
    def test_tie_breaks_to_lowest_index(self):
        params = init_parameters(CLASSIFIER_KIND, CFG, seed=0)
        for p in params.values():
            p.data[...] = 0.0
        model = ClassifierModel(CFG, params)
        ids = np.array([[CLS_ID, 12, SEP_ID]])
        assert predict_groups(model, ids)[0] == 0

    def test_accuracy_counts(self):
        params = init_parameters(CLASSIFIER_KIND, CFG, seed=0)
        for p in params.values():
            p.data[...] = 0.0
        model = ClassifierModel(CFG, params)
        batches = [
            (np.array([[CLS_ID, 12, SEP_ID]]), np.array([0])),
            (np.array([[CLS_ID, 13, SEP_ID]]), np.array([3])),
        ]
        assert accuracy(model, batches) == 0.5

    def test_accuracy_empty_rejected(self):
        model = ClassifierModel(CFG, init_parameters(CLASSIFIER_KIND, CFG, seed=0))
        with pytest.raises(ValueError):
            accuracy(model, [])


class TestFromDonor:
    def test_copies_encoder_and_keeps_fresh_head(self):
        donor = arrays_from_tensors(init_parameters(ENCODER_KIND, CFG, seed=9))
        params = classifier_from_donor(donor, CFG, seed=1)
        for path, _ in encoder_manifest(CFG):
            np.testing.assert_array_equal(params[path].data, donor[path])
        assert params["head.weight"].shape == (CFG.hidden_dim, 6)
        np.testing.assert_array_equal(params["head.bias"].data, np.zeros(6))

    def test_missing_donor_param(self):
        donor = arrays_from_tensors(init_parameters(ENCODER_KIND, CFG, seed=9))
        del donor["embedding.norm.gamma"]
        with pytest.raises(ValueError, match="embedding.norm.gamma"):
            classifier_from_donor(donor, CFG, seed=1)

    def test_copies_are_independent(self):
        donor = arrays_from_tensors(init_parameters(ENCODER_KIND, CFG, seed=9))
        params = classifier_from_donor(donor, CFG, seed=1)
        params["embedding.token.weight"].data[0, 0] += 1.0
        assert donor["embedding.token.weight"][0, 0] != params["embedding.token.weight"].data[0, 0]


class TestBatches:
    def test_length_sorted_with_labels_aligned(self):
        rows = [([CLS_ID] + [12] * n + [SEP_ID], n % 6) for n in (5, 1, 3)]
        batches = _batches(rows, batch_size=2)
        assert batches[0][0].shape[0] == 2
        assert batches[0][1][0] == 1 and batches[0][1][1] == 3
        assert batches[1][1][0] == 5


def separable_rows(vocab, n_per_class=30, seed=0):
    """Synthetic rows where one token identifies the class."""
    rng = np.random.default_rng(seed)
    rows = []
    for cls in range(6):
        for _ in range(n_per_class):
            filler = rng.integers(0, 3, size=3)
            text = f"g{cls} " + " ".join(f"f{int(x)}" for x in filler)
            rows.append((encode(text, vocab, CFG.max_len), cls))
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


class TestTraining:
    def test_learns_separable_synthetic(self):
        lines = [f"g{c} f0 f1 f2" for c in range(6)]
        vocab = build_vocab(lines, min_freq=1)
        cfg = ModelConfig(vocab_size=len(vocab), hidden_dim=16, num_layers=1,
                          num_heads=2, ffn_dim=32, max_len=10, dropout_rate=0.0)
        rows = separable_rows(vocab)
        split = int(len(rows) * 0.8)
        ccfg = ClassifierConfig(epochs=12, batch_size=16, learning_rate=3e-3, seed=0)
        best, history = train_classifier(rows[:split], rows[split:], cfg, ccfg)
        model = ClassifierModel(cfg, {k: Tensor(v, requires_grad=True) for k, v in best.items()})
        acc = accuracy(model, _batches(rows[split:], 16))
        assert acc > 0.95

    def test_best_snapshot_has_recorded_accuracy(self):
        lines = [f"g{c} f0 f1 f2" for c in range(6)]
        vocab = build_vocab(lines, min_freq=1)
        cfg = ModelConfig(vocab_size=len(vocab), hidden_dim=16, num_layers=1,
                          num_heads=2, ffn_dim=32, max_len=10, dropout_rate=0.0)
        rows = separable_rows(vocab, n_per_class=10)
        ccfg = ClassifierConfig(epochs=3, batch_size=8, learning_rate=1e-3, seed=1)
        best, history = train_classifier(rows[:48], rows[48:], cfg, ccfg)
        val_rows = [h for h in history if h["split"] == "val"]
        best_acc = max(h["accuracy"] for h in val_rows)
        model = ClassifierModel(cfg, {k: Tensor(v, requires_grad=True) for k, v in best.items()})
        got = accuracy(model, _batches(rows[48:], 8))
        np.testing.assert_allclose(got, best_acc, atol=1e-12)

    def test_deterministic(self):
        lines = [f"g{c} f0 f1 f2" for c in range(6)]
        vocab = build_vocab(lines, min_freq=1)
        cfg = ModelConfig(vocab_size=len(vocab), hidden_dim=16, num_layers=1,
                          num_heads=2, ffn_dim=32, max_len=10, dropout_rate=0.1)
        rows = separable_rows(vocab, n_per_class=5)
        ccfg = ClassifierConfig(epochs=2, batch_size=8, seed=7)
        a, _ = train_classifier(rows[:24], rows[24:], cfg, ccfg)
        b, _ = train_classifier(rows[:24], rows[24:], cfg, ccfg)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])
