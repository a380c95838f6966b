"""Checkpoint serialization: round trips, digests, integrity validation."""

import json

import numpy as np
import pytest

from empachat.checkpoint import (
    Checkpoint,
    CheckpointError,
    checkpoint_digest,
    load_checkpoint,
    save_checkpoint,
)
from empachat.model import ENCODER_KIND, ModelConfig, arrays_from_tensors, init_parameters
from empachat.tokenizer import SPECIAL_TOKENS, Vocab

CFG = ModelConfig(vocab_size=20, hidden_dim=8, num_layers=1, num_heads=2,
                  ffn_dim=16, max_len=6)


def make_ckpt(vocab=None, meta=None):
    params = arrays_from_tensors(init_parameters(ENCODER_KIND, CFG, seed=0))
    return Checkpoint(model_kind=ENCODER_KIND, config=CFG, params=params,
                      vocab=vocab, meta=meta or {})


def small_vocab():
    tokens = tuple(SPECIAL_TOKENS) + tuple(f"w{i}" for i in range(9))
    return Vocab(token_to_id={t: i for i, t in enumerate(tokens)}, id_to_token=tokens)


class TestRoundTrip:
    def test_values_survive_at_f32(self, tmp_path):
        ckpt = make_ckpt(meta={"variant": "cold"})
        save_checkpoint(ckpt, tmp_path / "ck")
        loaded = load_checkpoint(tmp_path / "ck")
        assert loaded.model_kind == ENCODER_KIND
        assert loaded.config == CFG
        assert loaded.meta["variant"] == "cold"
        assert set(loaded.params) == set(ckpt.params)
        for k, v in ckpt.params.items():
            np.testing.assert_array_equal(loaded.params[k], v.astype(np.float32).astype(np.float64))
            assert loaded.params[k].dtype == np.float64

    def test_vocab_round_trip(self, tmp_path):
        vocab = small_vocab()
        save_checkpoint(make_ckpt(vocab=vocab), tmp_path / "ck")
        loaded = load_checkpoint(tmp_path / "ck")
        assert loaded.vocab is not None
        assert loaded.vocab.id_to_token == vocab.id_to_token

    def test_no_vocab_loads_none(self, tmp_path):
        save_checkpoint(make_ckpt(), tmp_path / "ck")
        assert load_checkpoint(tmp_path / "ck").vocab is None

    def test_save_load_save_is_stable(self, tmp_path):
        save_checkpoint(make_ckpt(), tmp_path / "a")
        save_checkpoint(load_checkpoint(tmp_path / "a"), tmp_path / "b")
        assert (tmp_path / "a" / "weights.bin").read_bytes() == (tmp_path / "b" / "weights.bin").read_bytes()


class TestDigest:
    def test_digest_stable_and_sensitive(self, tmp_path):
        ckpt = make_ckpt()
        save_checkpoint(ckpt, tmp_path / "a")
        save_checkpoint(ckpt, tmp_path / "b")
        assert checkpoint_digest(tmp_path / "a") == checkpoint_digest(tmp_path / "b")
        ckpt.params["embedding.norm.beta"] = ckpt.params["embedding.norm.beta"] + 0.5
        save_checkpoint(ckpt, tmp_path / "c")
        assert checkpoint_digest(tmp_path / "a") != checkpoint_digest(tmp_path / "c")

    def test_digest_is_hex_sha256(self, tmp_path):
        save_checkpoint(make_ckpt(), tmp_path / "a")
        digest = checkpoint_digest(tmp_path / "a")
        assert len(digest) == 64
        int(digest, 16)


class TestSaveValidation:
    def test_missing_param(self, tmp_path):
        ckpt = make_ckpt()
        del ckpt.params["embedding.norm.gamma"]
        with pytest.raises(CheckpointError, match="embedding.norm.gamma"):
            save_checkpoint(ckpt, tmp_path / "ck")

    def test_extra_param(self, tmp_path):
        ckpt = make_ckpt()
        ckpt.params["stray.weight"] = np.zeros(3)
        with pytest.raises(CheckpointError, match="stray.weight"):
            save_checkpoint(ckpt, tmp_path / "ck")

    def test_wrong_shape(self, tmp_path):
        ckpt = make_ckpt()
        ckpt.params["embedding.norm.gamma"] = np.ones(CFG.hidden_dim + 1)
        with pytest.raises(CheckpointError, match="embedding.norm.gamma"):
            save_checkpoint(ckpt, tmp_path / "ck")


class TestLoadValidation:
    def saved(self, tmp_path):
        save_checkpoint(make_ckpt(), tmp_path / "ck")
        return tmp_path / "ck"

    def edit_manifest(self, path, fn):
        manifest = json.loads((path / "manifest.json").read_text())
        fn(manifest)
        (path / "manifest.json").write_text(json.dumps(manifest))

    def test_truncated_weights(self, tmp_path):
        path = self.saved(tmp_path)
        blob = (path / "weights.bin").read_bytes()
        (path / "weights.bin").write_bytes(blob[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_oversized_weights(self, tmp_path):
        path = self.saved(tmp_path)
        with open(path / "weights.bin", "ab") as f:
            f.write(b"\x00" * 4)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unknown_format_version(self, tmp_path):
        path = self.saved(tmp_path)
        self.edit_manifest(path, lambda m: m.update(format_version=99))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_shape_tamper(self, tmp_path):
        path = self.saved(tmp_path)

        def tamper(m):
            m["parameters"][0]["shape"] = [1, 1]

        self.edit_manifest(path, tamper)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_entry_removed(self, tmp_path):
        path = self.saved(tmp_path)
        self.edit_manifest(path, lambda m: m["parameters"].pop())
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope")

    def test_unknown_kind(self, tmp_path):
        path = self.saved(tmp_path)
        self.edit_manifest(path, lambda m: m.update(model_kind="mystery"))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
