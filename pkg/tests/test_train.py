"""Pair encoding, batching, and the fine-tuning loop."""

import csv
import math

import numpy as np
import pytest

from empachat import train as tr
from empachat.data import DialogueSample, EmotionLabel
from empachat.model import SEQ2SEQ_KIND, ModelConfig, Seq2SeqModel, init_parameters
from empachat.tokenizer import CLS_ID, PAD_ID, SEP_ID, build_vocab, decode, encode
from empachat.train import (
    TrainConfig,
    encode_pair,
    finetune,
    make_batches,
    pad_rows,
    seq2seq_loss,
)

VOCAB = build_vocab(["hello there friend", "good to see you", "<joy> marker"], min_freq=1)
CFG = ModelConfig(vocab_size=len(VOCAB), hidden_dim=16, num_layers=1, num_heads=2,
                  ffn_dim=32, max_len=12, dropout_rate=0.0)


def sample(utterance="hello there", response="good to see you", emotion="proud"):
    return DialogueSample(emotion=EmotionLabel.from_fine(emotion),
                          utterance=utterance, response=response)


class TestTrainConfig:
    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            TrainConfig(variant="spicy")

    @pytest.mark.parametrize("variant", tr.VARIANTS)
    def test_accepts_known_variants(self, variant):
        assert TrainConfig(variant=variant).variant == variant


class TestEncodePair:
    def test_plain_variants_use_raw_utterance(self):
        for variant in ("cold", "warm"):
            enc, dec = encode_pair(sample(), VOCAB, CFG.max_len, variant)
            assert enc == encode("hello there", VOCAB, CFG.max_len)
            assert dec == encode("good to see you", VOCAB, CFG.max_len)

    def test_emoprepend_gold_label(self):
        enc, _ = encode_pair(sample(emotion="joyful"), VOCAB, CFG.max_len, "emoprepend")
        text = decode(enc, VOCAB)
        assert text.startswith("<joy>")
        # exactly one reserved emotion token
        assert sum(1 for t in text.split() if t.startswith("<") and t.endswith(">")) == 1

    def test_emoprepend_inference_uses_prediction(self):
        enc, _ = encode_pair(sample(emotion="joyful"), VOCAB, CFG.max_len, "emoprepend",
                             predicted_group="sadness", at_inference=True)
        assert decode(enc, VOCAB).split()[0] == "<sadness>"

    def test_wraps_in_delimiters(self):
        enc, dec = encode_pair(sample(), VOCAB, CFG.max_len, "warm")
        assert enc[0] == CLS_ID and enc[-1] == SEP_ID
        assert dec[0] == CLS_ID and dec[-1] == SEP_ID


class TestBatching:
    def test_pad_rows(self):
        out = pad_rows([[4, 5], [6]], pad_id=PAD_ID)
        np.testing.assert_array_equal(out, [[4, 5], [6, PAD_ID]])

    def test_batches_are_length_sorted_and_sized(self):
        pairs = [([4] * n, [5] * (10 - n)) for n in range(1, 10)]
        batches = make_batches(pairs, batch_size=4)
        assert [b[0].shape[0] for b in batches] == [4, 4, 1]
        widths = [b[0].shape[1] for b in batches]
        assert widths == sorted(widths)

    def test_all_pairs_present_once(self):
        pairs = [([4 + i], [5, 5]) for i in range(7)]
        batches = make_batches(pairs, batch_size=3)
        seen = sorted(int(x) for b in batches for x in b[0][:, 0])
        assert seen == [4, 5, 6, 7, 8, 9, 10]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            make_batches([], 4)


class TestSeq2SeqLoss:
    def test_zero_params_give_log_vocab(self):
        params = init_parameters(SEQ2SEQ_KIND, CFG, seed=0)
        for p in params.values():
            p.data[...] = 0.0
        model = Seq2SeqModel(CFG, params)
        enc = np.array([[CLS_ID, 5, SEP_ID]])
        dec = np.array([[CLS_ID, 6, 7, SEP_ID]])
        loss, count = seq2seq_loss(model, enc, dec, train_mode=False)
        assert count == 3
        np.testing.assert_allclose(loss.item(), math.log(CFG.vocab_size), atol=1e-12)

    def test_pad_targets_excluded(self):
        params = init_parameters(SEQ2SEQ_KIND, CFG, seed=1)
        model = Seq2SeqModel(CFG, params)
        enc = np.array([[CLS_ID, 5, SEP_ID]])
        dec = np.array([[CLS_ID, 6, SEP_ID]])
        dec_padded = np.array([[CLS_ID, 6, SEP_ID, PAD_ID, PAD_ID]])
        a, ca = seq2seq_loss(model, enc, dec, train_mode=False)
        b, cb = seq2seq_loss(model, enc, dec_padded, train_mode=False)
        assert ca == cb == 2
        np.testing.assert_allclose(a.item(), b.item(), atol=1e-12)

    def test_too_short_rejected(self):
        model = Seq2SeqModel(CFG, init_parameters(SEQ2SEQ_KIND, CFG, seed=0))
        with pytest.raises(ValueError):
            seq2seq_loss(model, np.array([[CLS_ID, SEP_ID]]), np.array([[CLS_ID]]))

    def test_all_pad_targets_rejected(self):
        model = Seq2SeqModel(CFG, init_parameters(SEQ2SEQ_KIND, CFG, seed=0))
        enc = np.array([[CLS_ID, SEP_ID]])
        dec = np.array([[CLS_ID, PAD_ID, PAD_ID]])
        with pytest.raises(ValueError):
            seq2seq_loss(model, enc, dec)


def tiny_pairs(n=24):
    texts = ["hello there", "good to see you", "hello friend", "<joy> marker"]
    pairs = []
    for i in range(n):
        src = texts[i % len(texts)]
        tgt = texts[(i + 1) % len(texts)]
        pairs.append((encode(src, VOCAB, CFG.max_len), encode(tgt, VOCAB, CFG.max_len)))
    return pairs


class TestFinetune:
    def test_loss_decreases_and_logs(self, tmp_path):
        pairs = tiny_pairs()
        params = init_parameters(SEQ2SEQ_KIND, CFG, seed=0)
        cfg = TrainConfig(epochs=8, batch_size=8, learning_rate=3e-3, seed=0, log_every=2)
        log_path = tmp_path / "log.csv"
        best, history = finetune(pairs, pairs[:8], CFG, cfg, params, log_path=log_path)
        train_rows = [h for h in history if h["split"] == "train"]
        assert train_rows[-1]["loss"] < train_rows[0]["loss"] * 0.8
        val_rows = [h for h in history if h["split"] == "val"]
        assert len(val_rows) == cfg.epochs
        assert all(abs(math.exp(min(h["loss"], 700)) - h["ppl"]) < 1e-9 for h in val_rows)
        with open(log_path) as fh:
            logged = list(csv.DictReader(fh))
        assert len(logged) == len(history)
        assert set(best) == set(params)

    def test_returns_best_val_snapshot(self):
        pairs = tiny_pairs()
        params = init_parameters(SEQ2SEQ_KIND, CFG, seed=1)
        cfg = TrainConfig(epochs=4, batch_size=8, learning_rate=3e-3, seed=0)
        best, history = finetune(pairs, pairs[:8], CFG, cfg, params)
        val_rows = [h for h in history if h["split"] == "val"]
        best_epoch_loss = min(h["loss"] for h in val_rows)
        # rebuild a model from the snapshot and confirm it reproduces the best
        # recorded validation loss
        from empachat.evaluation import perplexity
        from empachat.tensor import Tensor
        snap = {k: Tensor(v.copy(), requires_grad=True) for k, v in best.items()}
        model = Seq2SeqModel(CFG, snap)
        batches = make_batches(pairs[:8], cfg.batch_size)
        got = perplexity(model, batches).nll
        np.testing.assert_allclose(got, best_epoch_loss, atol=1e-9)

    def test_deterministic(self):
        pairs = tiny_pairs(12)
        cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
        a, _ = finetune(pairs, pairs[:4], CFG, cfg, init_parameters(SEQ2SEQ_KIND, CFG, seed=2))
        b, _ = finetune(pairs, pairs[:4], CFG, cfg, init_parameters(SEQ2SEQ_KIND, CFG, seed=2))
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_non_finite_aborts(self, monkeypatch):
        pairs = tiny_pairs(8)
        real = tr.seq2seq_loss

        def poisoned(model, enc, dec, train_mode=True, rng=None):
            loss, count = real(model, enc, dec, train_mode=train_mode, rng=rng)
            loss.data[...] = np.inf
            return loss, count

        monkeypatch.setattr(tr, "seq2seq_loss", poisoned)
        params = init_parameters(SEQ2SEQ_KIND, CFG, seed=0)
        with pytest.raises(RuntimeError, match="finite"):
            finetune(pairs, [], CFG, TrainConfig(epochs=1, batch_size=4), params)
