"""Bidirectional encoder, causal decoder with cross-attention, warm-start assembly.

Parameters live in a flat dict keyed by dotted paths (``encoder.layer.3.attn.
query.weight``). The encoder-only model and the seq2seq encoder run the exact
same computation, so a warm-started encoder is bit-identical to its donor.

Warm-start copies every donor tensor into the encoder, and into the decoder's
self-attention, feed-forward, norm, and position slots; only the decoder's
cross-attention projections are freshly drawn. The token embedding is a single
tensor shared by the encoder, the decoder, and the output projection.

Parameter counts (V vocab, H hidden, L layers, F ffn width, M max length):
  encoder-only:  V*H + M*H + 2*H + L*(4*H^2 + 2*H*F + 9*H + F)
  seq2seq:       V*H + 2*(M*H + 2*H)
                 + L*(2*(4*H^2 + 2*H*F + 9*H + F) + 4*H^2 + 6*H)
  classifier:    encoder-only + 6*H + 6
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

MASK_NEG = -1e9

ENCODER_KIND = "encoder"
SEQ2SEQ_KIND = "seq2seq"
CLASSIFIER_KIND = "classifier"
NUM_GROUPS = 6


class ConfigMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 128
    num_layers: int = 4
    num_heads: int = 4
    ffn_dim: int = 512
    max_len: int = 150
    dropout_rate: float = 0.1
    init_std: float = 0.02
    layer_norm_eps: float = 1e-12

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigMismatchError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.max_len < 2:
            raise ConfigMismatchError("max_len must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _layer_entries(prefix: str, cfg: ModelConfig, cross: bool) -> list[tuple[str, tuple[int, ...]]]:
    h, f = cfg.hidden_dim, cfg.ffn_dim
    entries: list[tuple[str, tuple[int, ...]]] = []
    for name in ("query", "key", "value", "output"):
        entries.append((f"{prefix}.attn.{name}.weight", (h, h)))
        entries.append((f"{prefix}.attn.{name}.bias", (h,)))
    entries.append((f"{prefix}.attn.norm.gamma", (h,)))
    entries.append((f"{prefix}.attn.norm.beta", (h,)))
    if cross:
        for name in ("query", "key", "value", "output"):
            entries.append((f"{prefix}.cross.{name}.weight", (h, h)))
            entries.append((f"{prefix}.cross.{name}.bias", (h,)))
        entries.append((f"{prefix}.cross.norm.gamma", (h,)))
        entries.append((f"{prefix}.cross.norm.beta", (h,)))
    entries.append((f"{prefix}.ffn.intermediate.weight", (h, f)))
    entries.append((f"{prefix}.ffn.intermediate.bias", (f,)))
    entries.append((f"{prefix}.ffn.output.weight", (f, h)))
    entries.append((f"{prefix}.ffn.output.bias", (h,)))
    entries.append((f"{prefix}.ffn.norm.gamma", (h,)))
    entries.append((f"{prefix}.ffn.norm.beta", (h,)))
    return entries


def encoder_manifest(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    v, h, m = cfg.vocab_size, cfg.hidden_dim, cfg.max_len
    entries = [
        ("embedding.token.weight", (v, h)),
        ("embedding.position.weight", (m, h)),
        ("embedding.norm.gamma", (h,)),
        ("embedding.norm.beta", (h,)),
    ]
    for i in range(cfg.num_layers):
        entries.extend(_layer_entries(f"encoder.layer.{i}", cfg, cross=False))
    return entries


def seq2seq_manifest(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    v, h, m = cfg.vocab_size, cfg.hidden_dim, cfg.max_len
    entries = [
        ("shared.token.weight", (v, h)),
        ("encoder.position.weight", (m, h)),
        ("encoder.emb_norm.gamma", (h,)),
        ("encoder.emb_norm.beta", (h,)),
    ]
    for i in range(cfg.num_layers):
        entries.extend(_layer_entries(f"encoder.layer.{i}", cfg, cross=False))
    entries.append(("decoder.position.weight", (m, h)))
    entries.append(("decoder.emb_norm.gamma", (h,)))
    entries.append(("decoder.emb_norm.beta", (h,)))
    for i in range(cfg.num_layers):
        entries.extend(_layer_entries(f"decoder.layer.{i}", cfg, cross=True))
    return entries


def classifier_manifest(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    entries = encoder_manifest(cfg)
    entries.append(("head.weight", (cfg.hidden_dim, NUM_GROUPS)))
    entries.append(("head.bias", (NUM_GROUPS,)))
    return entries


def manifest_for_kind(kind: str, cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    if kind == ENCODER_KIND:
        return encoder_manifest(cfg)
    if kind == SEQ2SEQ_KIND:
        return seq2seq_manifest(cfg)
    if kind == CLASSIFIER_KIND:
        return classifier_manifest(cfg)
    raise ConfigMismatchError(f"unknown model kind: {kind!r}")


def param_count(kind: str, cfg: ModelConfig) -> int:
    """Closed-form parameter count; must match the manifest element sum."""
    v, h, l, f, m = cfg.vocab_size, cfg.hidden_dim, cfg.num_layers, cfg.ffn_dim, cfg.max_len
    layer = 4 * h * h + 2 * h * f + 9 * h + f
    if kind == ENCODER_KIND:
        return v * h + m * h + 2 * h + l * layer
    if kind == SEQ2SEQ_KIND:
        cross = 4 * h * h + 6 * h
        return v * h + 2 * (m * h + 2 * h) + l * (2 * layer + cross)
    if kind == CLASSIFIER_KIND:
        return param_count(ENCODER_KIND, cfg) + NUM_GROUPS * h + NUM_GROUPS
    raise ConfigMismatchError(f"unknown model kind: {kind!r}")


def init_parameters(kind: str, cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Fresh parameters: norms at identity, biases zero, weights Normal(0, init_std)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, Tensor] = {}
    for path, shape in manifest_for_kind(kind, cfg):
        if path.endswith(".gamma"):
            arr = np.ones(shape)
        elif path.endswith((".beta", ".bias")):
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, cfg.init_std, size=shape)
        params[path] = Tensor(arr, requires_grad=True)
    return params


def tensors_from_arrays(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}


def arrays_from_tensors(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def attention(q: Tensor, k: Tensor, v: Tensor, mask: Tensor | None = None) -> Tensor:
    """Scaled dot-product attention over the last two axes.

    q [.., T, d], k/v [.., S, d]; masked score positions carry a large
    negative additive term so their post-softmax weight is exactly zero.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query/key depth mismatch: {q.shape} vs {k.shape}")
    if k.shape[:-1] != v.shape[:-1]:
        raise ShapeError(f"key/value shape mismatch: {k.shape} vs {v.shape}")
    depth = q.shape[-1]
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = T.scale(T.matmul(q, T.transpose(k, axes)), 1.0 / math.sqrt(depth))
    if mask is not None:
        if mask.ndim != scores.ndim:
            raise ShapeError(f"mask rank {mask.shape} incompatible with scores {scores.shape}")
        scores = T.add(scores, mask)
    return T.matmul(T.softmax(scores, axis=-1), v)


def _linear(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    return T.add(T.matmul(x, params[f"{prefix}.weight"]), params[f"{prefix}.bias"])


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    b, t, h = x.shape
    return T.transpose(T.reshape(x, (b, t, num_heads, h // num_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, nh, t, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, t, nh * dh))


def _maybe_dropout(x: Tensor, cfg: ModelConfig, train_mode: bool, rng) -> Tensor:
    if train_mode and cfg.dropout_rate > 0.0:
        return T.dropout(x, cfg.dropout_rate, rng)
    return x


def _attention_sublayer(
    params, prefix, x, kv, mask, cfg: ModelConfig, train_mode, rng
) -> Tensor:
    q = _split_heads(_linear(x, params, f"{prefix}.query"), cfg.num_heads)
    k = _split_heads(_linear(kv, params, f"{prefix}.key"), cfg.num_heads)
    v = _split_heads(_linear(kv, params, f"{prefix}.value"), cfg.num_heads)
    depth = cfg.hidden_dim // cfg.num_heads
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(depth))
    if mask is not None:
        scores = T.add(scores, mask)
    probs = T.softmax(scores, axis=-1)
    probs = _maybe_dropout(probs, cfg, train_mode, rng)
    ctx = _merge_heads(T.matmul(probs, v))
    out = _linear(ctx, params, f"{prefix}.output")
    out = _maybe_dropout(out, cfg, train_mode, rng)
    return T.layer_norm(
        T.add(x, out),
        params[f"{prefix}.norm.gamma"],
        params[f"{prefix}.norm.beta"],
        cfg.layer_norm_eps,
    )


def _ffn_sublayer(params, prefix, x, cfg: ModelConfig, train_mode, rng) -> Tensor:
    inter = T.gelu(_linear(x, params, f"{prefix}.intermediate"))
    out = _linear(inter, params, f"{prefix}.output")
    out = _maybe_dropout(out, cfg, train_mode, rng)
    return T.layer_norm(
        T.add(x, out),
        params[f"{prefix}.norm.gamma"],
        params[f"{prefix}.norm.beta"],
        cfg.layer_norm_eps,
    )


def _embed(params, ids, token_key, pos_key, norm_key, cfg, train_mode, rng) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    seq_len = ids.shape[-1]
    tok = T.embedding(params[token_key], ids)
    pos = T.embedding(params[pos_key], np.arange(seq_len))
    h = T.layer_norm(
        T.add(tok, pos),
        params[f"{norm_key}.gamma"],
        params[f"{norm_key}.beta"],
        cfg.layer_norm_eps,
    )
    return _maybe_dropout(h, cfg, train_mode, rng)


def padding_mask(ids: np.ndarray, pad_id: int) -> Tensor:
    """Additive key-padding mask, shape [B, 1, 1, S]."""
    ids = np.asarray(ids, dtype=np.int64)
    m = np.where(ids == pad_id, MASK_NEG, 0.0)[:, None, None, :]
    return Tensor(m)


def causal_mask(seq_len: int) -> Tensor:
    """Additive causal mask, shape [1, 1, T, T]; position i sees keys <= i."""
    m = np.triu(np.full((seq_len, seq_len), MASK_NEG), k=1)
    return Tensor(m[None, None, :, :])


def _encoder_stack(
    params, ids, cfg, *, token_key, pos_key, norm_key, layer_prefix,
    pad_id, train_mode, rng,
) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeError(f"encoder ids must be [batch, seq], got shape {ids.shape}")
    if ids.shape[1] > cfg.max_len:
        raise ShapeError(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    mask = padding_mask(ids, pad_id)
    h = _embed(params, ids, token_key, pos_key, norm_key, cfg, train_mode, rng)
    for i in range(cfg.num_layers):
        prefix = f"{layer_prefix}.{i}"
        h = _attention_sublayer(params, f"{prefix}.attn", h, h, mask, cfg, train_mode, rng)
        h = _ffn_sublayer(params, f"{prefix}.ffn", h, cfg, train_mode, rng)
    return h


class EncoderModel:
    """Encoder-only stack: the pretraining donor and the classifier backbone."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor], pad_id: int = 0):
        self.config = config
        self.params = params
        self.pad_id = pad_id

    def forward(self, ids, train_mode: bool = False, rng=None) -> Tensor:
        return _encoder_stack(
            self.params, ids, self.config,
            token_key="embedding.token.weight",
            pos_key="embedding.position.weight",
            norm_key="embedding.norm",
            layer_prefix="encoder.layer",
            pad_id=self.pad_id, train_mode=train_mode, rng=rng,
        )

    def mlm_logits(self, ids, train_mode: bool = False, rng=None) -> Tensor:
        hidden = self.forward(ids, train_mode=train_mode, rng=rng)
        table = self.params["embedding.token.weight"]
        return T.matmul(hidden, T.transpose(table, (1, 0)))


class Seq2SeqModel:
    """Warm- or cold-started encoder-decoder with a tied output projection."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor], pad_id: int = 0):
        self.config = config
        self.params = params
        self.pad_id = pad_id

    def encode(self, enc_ids, train_mode: bool = False, rng=None) -> Tensor:
        return _encoder_stack(
            self.params, enc_ids, self.config,
            token_key="shared.token.weight",
            pos_key="encoder.position.weight",
            norm_key="encoder.emb_norm",
            layer_prefix="encoder.layer",
            pad_id=self.pad_id, train_mode=train_mode, rng=rng,
        )

    def decode(self, dec_ids, enc_states: Tensor, enc_ids, train_mode: bool = False, rng=None) -> Tensor:
        """Causal self-attention, cross-attention over encoder states, tied logits."""
        dec_ids = np.asarray(dec_ids, dtype=np.int64)
        if dec_ids.ndim != 2:
            raise ShapeError(f"decoder ids must be [batch, seq], got shape {dec_ids.shape}")
        if dec_ids.shape[1] > self.config.max_len:
            raise ShapeError(
                f"sequence length {dec_ids.shape[1]} exceeds max_len {self.config.max_len}"
            )
        if enc_states.ndim != 3 or enc_states.shape[1] == 0:
            raise ShapeError(f"encoder states must be [batch, seq>0, hidden], got {enc_states.shape}")
        cfg = self.config
        self_mask = causal_mask(dec_ids.shape[1])
        cross = padding_mask(enc_ids, self.pad_id)
        h = _embed(
            self.params, dec_ids,
            "shared.token.weight", "decoder.position.weight", "decoder.emb_norm",
            cfg, train_mode, rng,
        )
        for i in range(cfg.num_layers):
            prefix = f"decoder.layer.{i}"
            h = _attention_sublayer(self.params, f"{prefix}.attn", h, h, self_mask, cfg, train_mode, rng)
            h = _attention_sublayer(self.params, f"{prefix}.cross", h, enc_states, cross, cfg, train_mode, rng)
            h = _ffn_sublayer(self.params, f"{prefix}.ffn", h, cfg, train_mode, rng)
        table = self.params["shared.token.weight"]
        return T.matmul(h, T.transpose(table, (1, 0)))

    def forward(self, enc_ids, dec_ids, train_mode: bool = False, rng=None) -> Tensor:
        enc_states = self.encode(enc_ids, train_mode=train_mode, rng=rng)
        return self.decode(dec_ids, enc_states, enc_ids, train_mode=train_mode, rng=rng)


class ClassifierModel:
    """Encoder plus a 6-way linear head over the first position's state."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor], pad_id: int = 0):
        self.config = config
        self.params = params
        self.encoder = EncoderModel(config, params, pad_id=pad_id)

    def logits(self, ids, train_mode: bool = False, rng=None) -> Tensor:
        hidden = self.encoder.forward(ids, train_mode=train_mode, rng=rng)
        b, s, h = hidden.shape
        flat = T.reshape(hidden, (b * s, h))
        # First-position pooling: rows 0, S, 2S, ... of the flattened states.
        pooled = _take_rows(flat, np.arange(b) * s)
        return T.add(T.matmul(pooled, self.params["head.weight"]), self.params["head.bias"])


def _take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    out_data = x.data[idx]

    def backward():
        if x.requires_grad:
            delta = np.zeros_like(x.data)
            np.add.at(delta, idx, out.grad)
            x._accumulate(delta)

    out = T._make(out_data, (x,), backward)
    return out


# Donor (encoder-only) path -> seq2seq encoder/decoder paths.
def _warm_start_map(cfg: ModelConfig) -> list[tuple[str, str]]:
    pairs = [
        ("shared.token.weight", "embedding.token.weight"),
        ("encoder.position.weight", "embedding.position.weight"),
        ("encoder.emb_norm.gamma", "embedding.norm.gamma"),
        ("encoder.emb_norm.beta", "embedding.norm.beta"),
        ("decoder.position.weight", "embedding.position.weight"),
        ("decoder.emb_norm.gamma", "embedding.norm.gamma"),
        ("decoder.emb_norm.beta", "embedding.norm.beta"),
    ]
    for i in range(cfg.num_layers):
        for sub in ("attn", "ffn"):
            donor_entries = [
                p for p, _ in _layer_entries(f"encoder.layer.{i}", cfg, cross=False)
                if f".{sub}." in p
            ]
            for donor_path in donor_entries:
                pairs.append((donor_path, donor_path))
                pairs.append((donor_path.replace("encoder.", "decoder.", 1), donor_path))
    # De-duplicate while preserving order (encoder self-map pairs repeat).
    seen = set()
    out = []
    for tgt, src in pairs:
        if tgt not in seen:
            seen.add(tgt)
            out.append((tgt, src))
    return out


def warm_start(donor_config: ModelConfig, donor_params: dict[str, np.ndarray],
               seed: int) -> dict[str, Tensor]:
    """Assemble seq2seq parameters from an encoder-only donor.

    Everything with a donor counterpart is copied; the decoder's
    cross-attention projections are drawn from Normal(0, init_std^2) with zero
    biases and identity norms.
    """
    cfg = donor_config
    expected = dict(encoder_manifest(cfg))
    for path, shape in expected.items():
        if path not in donor_params:
            raise ConfigMismatchError(f"donor checkpoint missing parameter: {path}")
        if tuple(donor_params[path].shape) != tuple(shape):
            raise ConfigMismatchError(
                f"donor parameter {path} has shape {tuple(donor_params[path].shape)}, expected {tuple(shape)}"
            )
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, Tensor] = {}
    copy_map = dict(_warm_start_map(cfg))
    for path, shape in seq2seq_manifest(cfg):
        if path in copy_map:
            params[path] = Tensor(donor_params[copy_map[path]].copy(), requires_grad=True)
        elif ".cross." in path:
            if path.endswith(".norm.gamma"):
                arr = np.ones(shape)
            elif path.endswith((".bias", ".norm.beta")):
                arr = np.zeros(shape)
            else:
                arr = rng.normal(0.0, cfg.init_std, size=shape)
            params[path] = Tensor(arr, requires_grad=True)
        else:
            raise ConfigMismatchError(f"no warm-start rule for parameter: {path}")
    return params
