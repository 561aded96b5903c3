"""The assembled classifier and its checkpoint format.

A batch of W_s x W_s x S windows is tokenized, projected, given a CLS token
and positional rows, run through L encoder layers (attention block, then an
FFN with its own residual LayerNorm), and classified from the mean of the
final embedding rows. The attention block is either the memory-enhanced
variant or plain self-attention, selected per config for ablations.

The pooled readout matters: memory attention never mixes tokens within a
pass (keys and values come only from the shared bank), so any single fixed
position, the CLS row included, carries no per-sample signal at eval time.
Averaging over all rows keeps every token's residual path in the logits and
makes the model trainable in both attention modes.

Checkpoints (magic ``MFCK``) store the format version, the full config, and
one named record per tensor, parameters and memory banks alike, as
little-endian float64. Loading rebuilds the model from the stored config and
overwrites every tensor, so a round trip is bit identity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .attention import MemoryAttention, StandardAttention
from .embedding import PE_MODES, PatchProjector, PositionalEmbedding, tokenize_batch

__all__ = [
    "ModelConfig",
    "MemFormer",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

ATTENTION_MODES = ("memory", "standard")
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed or contradicts the expected config."""


@dataclass
class ModelConfig:
    window: int = 14
    patch: int = 2
    bands: int = 16
    embed: int = 64
    layers: int = 4
    heads: int = 8
    ffn: int = 256
    memory: int = 10
    classes: int = 2
    dropout: float = 0.1
    pe_mode: str = "sspe"
    attention: str = "memory"
    seed: int = 0

    def __post_init__(self):
        for name in ("window", "patch", "bands", "embed", "heads", "ffn", "memory", "classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        if self.embed % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide embed ({self.embed})")
        if self.window % self.patch != 0:
            raise ValueError(f"patch ({self.patch}) must divide window ({self.window})")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pe_mode not in PE_MODES:
            raise ValueError(f"pe_mode must be one of {PE_MODES}, got {self.pe_mode!r}")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")

    @property
    def tokens(self):
        """Sub-patches per window, excluding CLS."""
        return (self.window // self.patch) ** 2


class _EncoderLayer:
    """Attention block followed by an FFN with its own residual norm."""

    def __init__(self, cfg, rng):
        if cfg.attention == "memory":
            self.attn = MemoryAttention(
                cfg.embed, cfg.heads, cfg.memory, rng, dropout_rate=cfg.dropout
            )
        else:
            self.attn = StandardAttention(cfg.embed, cfg.heads, rng, dropout_rate=cfg.dropout)
        self.ffn_w1 = ad.glorot_uniform(rng, (cfg.embed, cfg.ffn))
        self.ffn_b1 = ad.parameter(np.zeros(cfg.ffn))
        self.ffn_w2 = ad.glorot_uniform(rng, (cfg.ffn, cfg.embed))
        self.ffn_b2 = ad.parameter(np.zeros(cfg.embed))
        self.ln_gain = ad.parameter(np.ones(cfg.embed))
        self.ln_bias = ad.parameter(np.zeros(cfg.embed))
        self.dropout = cfg.dropout

    def ffn(self, x):
        return ad.affine(ad.relu(ad.affine(x, self.ffn_w1, self.ffn_b1)), self.ffn_w2, self.ffn_b2)

    def forward(self, z, train, rng):
        a = self.attn.forward(z, train=train, rng=rng)
        f = self.ffn(a)
        if train and self.dropout > 0:
            f = ad.dropout(f, self.dropout, rng, train=True)
        return ad.layer_norm(ad.add(a, f), self.ln_gain, self.ln_bias)

    def parameters(self, prefix):
        params = self.attn.parameters(f"{prefix}.attn")
        params.update(
            {
                f"{prefix}.ffn_w1": self.ffn_w1,
                f"{prefix}.ffn_b1": self.ffn_b1,
                f"{prefix}.ffn_w2": self.ffn_w2,
                f"{prefix}.ffn_b2": self.ffn_b2,
                f"{prefix}.ln_gain": self.ln_gain,
                f"{prefix}.ln_bias": self.ln_bias,
            }
        )
        return params


class MemFormer:
    """Window classifier with selectable attention and positional modes."""

    def __init__(self, config):
        self.config = config
        init_seq, drop_seq = np.random.SeedSequence(config.seed).spawn(2)
        rng = np.random.default_rng(init_seq)
        self.dropout_rng = np.random.default_rng(drop_seq)
        self.cls = ad.parameter(np.zeros(config.embed))
        self.projector = PatchProjector(config.embed, config.patch, config.bands, rng)
        self.positional = PositionalEmbedding(config.pe_mode, config.embed, config.tokens, rng)
        self.layers = [_EncoderLayer(config, rng) for _ in range(config.layers)]
        self.classifier_w = ad.glorot_uniform(rng, (config.embed, config.classes))
        self.classifier_b = ad.parameter(np.zeros(config.classes))

    # -- state access -------------------------------------------------------
    def parameters(self):
        """Ordered name -> trainable tensor map."""
        params = {"cls": self.cls}
        params.update(self.projector.parameters())
        params.update(self.positional.parameters())
        for i, layer in enumerate(self.layers):
            params.update(layer.parameters(f"layer{i}"))
        params["classifier.weight"] = self.classifier_w
        params["classifier.bias"] = self.classifier_b
        return params

    def buffers(self):
        """Name -> memory bank array map (empty in standard mode)."""
        out = {}
        for i, layer in enumerate(self.layers):
            if hasattr(layer.attn, "buffer"):
                out[f"layer{i}.attn.memory"] = layer.attn.buffer.entries
        return out

    def set_buffer(self, name, values):
        i = int(name.split(".")[0].removeprefix("layer"))
        buf = self.layers[i].attn.buffer
        values = np.asarray(values, dtype=np.float64)
        if values.shape != buf.entries.shape:
            raise ValueError(f"{name}: shape {values.shape} != {buf.entries.shape}")
        buf.entries = values.copy()

    def freeze_memory(self):
        for layer in self.layers:
            if hasattr(layer.attn, "buffer"):
                layer.attn.buffer.freeze()

    def thaw_memory(self):
        for layer in self.layers:
            if hasattr(layer.attn, "buffer"):
                layer.attn.buffer.thaw()

    def count_params(self):
        """(trainable, non_trainable): parameter census and memory-bank sizes."""
        trainable = sum(p.data.size for p in self.parameters().values())
        non_trainable = sum(b.size for b in self.buffers().values())
        return trainable, non_trainable

    # -- forward paths ---------------------------------------------------------
    def forward(self, batch, train=False):
        """(B, W_s, W_s, S) windows -> (B, C) logits."""
        batch = np.asarray(batch, dtype=np.float64)
        cfg = self.config
        want = (cfg.window, cfg.window, cfg.bands)
        if batch.ndim != 4 or batch.shape[1:] != want:
            raise ValueError(f"batch must be (B, {want[0]}, {want[1]}, {want[2]}), got {batch.shape}")
        if not np.isfinite(batch).all():
            raise ValueError("batch contains non-finite values")
        b = batch.shape[0]

        tokens, coords = tokenize_batch(batch, cfg.patch)
        z = self.projector.forward(tokens)
        cls_row = ad.broadcast_to(ad.reshape(self.cls, (1, 1, cfg.embed)), (b, 1, cfg.embed))
        z = ad.concat([cls_row, z], axis=1)
        profiles = np.abs(tokens).mean(axis=(2, 3)) if cfg.pe_mode == "sspe" else None
        z = ad.add(z, self.positional.forward(coords, profiles))

        for i, layer in enumerate(self.layers):
            try:
                z = layer.forward(z, train, self.dropout_rng)
            except ValueError as e:
                raise ValueError(f"layer {i}: {e}") from e
            if not np.isfinite(z.data).all():
                raise ValueError(f"layer {i}: non-finite activations")

        pooled = ad.tensor_mean(z, axis=1)
        return ad.affine(pooled, self.classifier_w, self.classifier_b)

    def predict(self, batch):
        """Most likely class per window (eval mode); ties go to the lower index."""
        return np.argmax(self.forward(batch, train=False).data, axis=1)

    def predict_proba(self, batch):
        """Softmax class probabilities per window (eval mode)."""
        logits = self.forward(batch, train=False).data
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


# -- checkpoint serialization ----------------------------------------------------

_MAGIC = b"MFCK"
_CONFIG_INTS = ("window", "patch", "bands", "embed", "layers", "heads", "ffn", "memory", "classes")


def save_checkpoint(model, path):
    """Write config, parameters, and memory banks as one MFCK file."""
    cfg = model.config
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<H", CHECKPOINT_VERSION)
    blob += struct.pack("<9I", *(getattr(cfg, n) for n in _CONFIG_INTS))
    blob += struct.pack("<d", cfg.dropout)
    blob += struct.pack("<BB", PE_MODES.index(cfg.pe_mode), ATTENTION_MODES.index(cfg.attention))
    blob += struct.pack("<q", cfg.seed)
    records = {name: p.data for name, p in model.parameters().items()}
    records.update(model.buffers())
    for name, arr in records.items():
        encoded = name.encode()
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def _take(data, offset, size, path, what):
    if offset + size > len(data):
        raise CheckpointError(
            f"{path}: truncated at byte {len(data)} while reading {what} "
            f"(need {offset + size} bytes)"
        )
    return data[offset : offset + size], offset + size


def load_checkpoint(path, expect=None):
    """Rebuild a model from an MFCK file.

    ``expect`` is an optional ModelConfig; any stored field that differs is
    rejected by name before tensors are touched.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte 0: expected {_MAGIC!r}, found {bytes(data[:4])!r}")
    raw, offset = _take(data, 4, 2, path, "version")
    version = struct.unpack("<H", raw)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version mismatch: file has {version}, expected {CHECKPOINT_VERSION}")

    raw, offset = _take(data, offset, 9 * 4 + 8 + 2 + 8, path, "config block")
    ints = struct.unpack_from("<9I", raw, 0)
    dropout = struct.unpack_from("<d", raw, 36)[0]
    pe_idx, attn_idx = struct.unpack_from("<BB", raw, 44)
    seed = struct.unpack_from("<q", raw, 46)[0]
    if pe_idx >= len(PE_MODES):
        raise CheckpointError(f"{path}: unknown pe_mode index {pe_idx}")
    if attn_idx >= len(ATTENTION_MODES):
        raise CheckpointError(f"{path}: unknown attention index {attn_idx}")
    cfg = ModelConfig(
        **dict(zip(_CONFIG_INTS, ints)),
        dropout=dropout,
        pe_mode=PE_MODES[pe_idx],
        attention=ATTENTION_MODES[attn_idx],
        seed=seed,
    )

    if expect is not None:
        for f in fields(ModelConfig):
            got, want = getattr(cfg, f.name), getattr(expect, f.name)
            if got != want:
                raise CheckpointError(
                    f"{path}: config mismatch on field {f.name!r}: checkpoint has {got!r}, expected {want!r}"
                )

    records = {}
    while offset < len(data):
        raw, offset = _take(data, offset, 2, path, "record name length")
        name_len = struct.unpack("<H", raw)[0]
        raw, offset = _take(data, offset, name_len, path, "record name")
        name = raw.decode()
        raw, offset = _take(data, offset, 1, path, f"rank of {name!r}")
        rank = raw[0]
        raw, offset = _take(data, offset, 4 * rank, path, f"extents of {name!r}")
        shape = struct.unpack(f"<{rank}I", raw)
        count = int(np.prod(shape)) if rank else 1
        raw, offset = _take(data, offset, 8 * count, path, f"data of {name!r}")
        records[name] = np.frombuffer(raw, dtype="<f8").reshape(shape)

    model = MemFormer(cfg)
    expected = {name: p.data.shape for name, p in model.parameters().items()}
    expected.update({name: b.shape for name, b in model.buffers().items()})
    missing = sorted(set(expected) - set(records))
    unknown = sorted(set(records) - set(expected))
    if missing or unknown:
        raise CheckpointError(f"{path}: record mismatch: missing {missing}, unknown {unknown}")
    for name, arr in records.items():
        if arr.shape != expected[name]:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, expected {expected[name]}"
            )
    params = model.parameters()
    for name, arr in records.items():
        if name in params:
            params[name].data = arr.astype(np.float64)
        else:
            model.set_buffer(name, arr)
    return model
