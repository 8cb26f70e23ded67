"""Probe heads over frozen per-frame features.

Four variants share one vocabulary of parts:

* ``linear`` — mean over per-frame CLS tokens, then a linear classifier.
* ``attentive`` — one learned query cross-attends over all tokens (per-frame
  CLS + patches), followed by a pre-LN feed-forward block and a classifier.
* ``selfattn`` — per-frame CLS + patch tokens through one simplified
  self-attention layer (no LN, no residual, no FF by default), mean pooled.
* ``step`` — per-frame CLS tokens are discarded, a single learnable global
  CLS is prepended, a learnable frame-wise temporal embedding is added to
  every patch token of its frame, then the same simplified attention layer;
  the mean pool runs over *all* output tokens including the CLS slot.

Ablation axes (positional-encoding scheme and granularity, block style,
aggregation, CLS handling) are explicit config fields so each claim about a
component can be tested as a controlled experiment.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import ops
from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .features import FeatureSequence
from .tensor import Tensor


class Variant(str, Enum):
    LINEAR = "linear"
    ATTENTIVE = "attentive"
    SELF_ATTN = "selfattn"
    STEP = "step"


class PEScheme(str, Enum):
    NONE = "none"
    FIXED_SINUSOIDAL = "fixed-sinusoidal"
    LEARNABLE = "learnable"
    HYBRID = "hybrid"


class PEGranularity(str, Enum):
    FRAME_WISE = "frame-wise"
    TOKEN_WISE = "token-wise"


class BlockStyle(str, Enum):
    ATTN_ONLY = "attn-only"
    ATTN_LN_SKIP = "attn-ln-skip"
    FULL_BLOCK = "full-block"


class Aggregation(str, Enum):
    GLOBAL_CLS_ONLY = "global-cls-only"
    PATCH_ONLY = "patch-only"
    COMBINED = "combined"


class ClsMode(str, Enum):
    PER_FRAME_CLS = "per-frame-cls"
    GLOBAL_CLS = "global-cls"


_ENUM_FIELDS = {
    "variant": Variant,
    "pe_scheme": PEScheme,
    "pe_granularity": PEGranularity,
    "block_style": BlockStyle,
    "aggregation": Aggregation,
    "cls_mode": ClsMode,
}


@dataclass(frozen=True)
class ProbeConfig:
    """Complete description of a probe head; canonically JSON-serializable."""

    variant: Variant
    d_model: int
    num_heads: int
    num_classes: int
    num_frames: int
    tokens_per_frame: int
    pe_scheme: PEScheme = PEScheme.NONE
    pe_granularity: PEGranularity = PEGranularity.FRAME_WISE
    block_style: BlockStyle = BlockStyle.ATTN_ONLY
    aggregation: Aggregation = Aggregation.COMBINED
    cls_mode: ClsMode = ClsMode.PER_FRAME_CLS
    seed: int = 0

    def __post_init__(self):
        for name, enum_cls in _ENUM_FIELDS.items():
            val = getattr(self, name)
            if not isinstance(val, enum_cls):
                object.__setattr__(self, name, enum_cls(val))
        if self.d_model < 1 or self.num_classes < 1 or self.num_frames < 1 \
                or self.tokens_per_frame < 1 or self.num_heads < 1:
            raise ConfigError(f"all dims must be >=1: {self}")
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}")
        if self.variant == Variant.STEP and self.cls_mode != ClsMode.GLOBAL_CLS:
            raise ConfigError("step probe requires cls_mode=global-cls")
        if self.variant == Variant.SELF_ATTN and self.cls_mode != ClsMode.PER_FRAME_CLS:
            raise ConfigError("selfattn baseline requires cls_mode=per-frame-cls")
        if self.aggregation != Aggregation.COMBINED and self.cls_mode != ClsMode.GLOBAL_CLS:
            raise ConfigError("aggregation ablations only apply to global-CLS probes")

    @staticmethod
    def for_variant(variant, d_model: int, num_classes: int, num_frames: int,
                    tokens_per_frame: int, num_heads: int = 4, seed: int = 0,
                    **overrides) -> "ProbeConfig":
        """Canonical defaults per variant, with explicit overrides on top."""
        variant = Variant(variant)
        base = dict(variant=variant, d_model=d_model, num_heads=num_heads,
                    num_classes=num_classes, num_frames=num_frames,
                    tokens_per_frame=tokens_per_frame, seed=seed)
        if variant == Variant.STEP:
            base.update(pe_scheme=PEScheme.LEARNABLE,
                        pe_granularity=PEGranularity.FRAME_WISE,
                        block_style=BlockStyle.ATTN_ONLY,
                        aggregation=Aggregation.COMBINED,
                        cls_mode=ClsMode.GLOBAL_CLS)
        elif variant == Variant.SELF_ATTN:
            base.update(pe_scheme=PEScheme.NONE,
                        block_style=BlockStyle.ATTN_ONLY,
                        cls_mode=ClsMode.PER_FRAME_CLS)
        else:
            base.update(pe_scheme=PEScheme.NONE, cls_mode=ClsMode.PER_FRAME_CLS)
        base.update(overrides)
        return ProbeConfig(**base)

    def with_overrides(self, **kwargs) -> "ProbeConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for name in _ENUM_FIELDS:
            out[name] = out[name].value
        return out

    def to_canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(d: dict) -> "ProbeConfig":
        known = {f.name for f in dataclasses.fields(ProbeConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown probe config fields: {sorted(unknown)}")
        return ProbeConfig(**d)


def pe_rows(config: ProbeConfig) -> int:
    if config.pe_granularity == PEGranularity.TOKEN_WISE:
        return config.num_frames * config.tokens_per_frame
    return config.num_frames


def token_layout(config: ProbeConfig) -> np.ndarray:
    """frame_index per token: -1 for the global CLS, else the frame number."""
    t, n = config.num_frames, config.tokens_per_frame
    if config.cls_mode == ClsMode.PER_FRAME_CLS:
        return np.repeat(np.arange(t), n + 1)
    if config.aggregation == Aggregation.GLOBAL_CLS_ONLY:
        return np.array([-1])
    patches = np.repeat(np.arange(t), n)
    if config.aggregation == Aggregation.PATCH_ONLY:
        return patches
    return np.concatenate([[-1], patches])


def token_count(config: ProbeConfig) -> int:
    return int(token_layout(config).shape[0])


def sinusoidal_table(rows: int, d: int) -> np.ndarray:
    """Standard fixed encoding: sin on even dims, cos on odd; row 0 = [0,1,0,1,...]."""
    pos = np.arange(rows, dtype=np.float64)[:, None]
    idx = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, idx / d)
    table = np.zeros((rows, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d // 2])
    return table.astype(np.float32)


def count_params(config: ProbeConfig) -> int:
    """Closed-form trainable parameter count (verified by enumeration in tests)."""
    d, c = config.d_model, config.num_classes
    total = d * c + c  # classifier
    if config.variant == Variant.LINEAR:
        return total
    total += 4 * (d * d + d)  # q, k, v, o projections with biases
    ff = d * (4 * d) + 4 * d + (4 * d) * d + d
    ln = 2 * d
    if config.variant == Variant.ATTENTIVE:
        return total + d + 2 * ln + ff  # query token, two LNs, feed-forward
    if config.block_style == BlockStyle.ATTN_LN_SKIP:
        total += ln
    elif config.block_style == BlockStyle.FULL_BLOCK:
        total += 2 * ln + ff
    if config.pe_scheme in (PEScheme.LEARNABLE, PEScheme.HYBRID):
        total += pe_rows(config) * d
    if config.cls_mode == ClsMode.GLOBAL_CLS:
        total += d
    return total


# ---------------------------------------------------------------------------
# parameters


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02,
                  dtype=np.float32) -> np.ndarray:
    # resample anything beyond 2 std so tails are bounded
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


@dataclass
class ProbeModel:
    config: ProbeConfig
    params: dict[str, Tensor]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    last_attention: np.ndarray | None = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self):
        return self.params.values()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def count_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            raise ConfigError(
                f"parameter names mismatch: have {sorted(self.params)}, got {sorted(arrays)}")
        for k, v in arrays.items():
            tgt = self.params[k]
            if tgt.shape != v.shape:
                raise ConfigError(f"parameter {k}: shape {v.shape} != expected {tgt.shape}")
            tgt.data = np.ascontiguousarray(v, dtype=tgt.dtype)


def init_params(config: ProbeConfig, seed: int | None = None,
                dtype=np.float32) -> ProbeModel:
    """Fresh parameters: truncated-normal weights (std 0.02), zero biases,
    normal(0.02) temporal PE and global CLS, unit/zero layer norms."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, c = config.d_model, config.num_classes
    params: dict[str, Tensor] = {}
    buffers: dict[str, np.ndarray] = {}

    def param(name, arr):
        params[name] = Tensor(arr.astype(dtype), requires_grad=True)

    if config.variant != Variant.LINEAR:
        for nm in ("q", "k", "v", "o"):
            param(f"w_{nm}", _trunc_normal(rng, (d, d), dtype=dtype))
            param(f"b_{nm}", np.zeros(d, dtype=dtype))
    if config.variant == Variant.ATTENTIVE:
        param("query", rng.normal(0.0, 0.02, size=(1, d)).astype(dtype))
    needs_ln1 = (config.variant == Variant.ATTENTIVE
                 or config.block_style in (BlockStyle.ATTN_LN_SKIP, BlockStyle.FULL_BLOCK))
    needs_ff = (config.variant == Variant.ATTENTIVE
                or config.block_style == BlockStyle.FULL_BLOCK)
    if needs_ln1 and config.variant != Variant.LINEAR:
        param("ln1_gamma", np.ones(d, dtype=dtype))
        param("ln1_beta", np.zeros(d, dtype=dtype))
    if needs_ff and config.variant != Variant.LINEAR:
        param("ff_w1", _trunc_normal(rng, (d, 4 * d), dtype=dtype))
        param("ff_b1", np.zeros(4 * d, dtype=dtype))
        param("ff_w2", _trunc_normal(rng, (4 * d, d), dtype=dtype))
        param("ff_b2", np.zeros(d, dtype=dtype))
        param("ln2_gamma", np.ones(d, dtype=dtype))
        param("ln2_beta", np.zeros(d, dtype=dtype))

    if config.variant in (Variant.SELF_ATTN, Variant.STEP):
        rows = pe_rows(config)
        if config.pe_scheme == PEScheme.LEARNABLE:
            param("temporal_pe", rng.normal(0.0, 0.02, size=(rows, d)).astype(dtype))
        elif config.pe_scheme == PEScheme.FIXED_SINUSOIDAL:
            buffers["temporal_pe_base"] = sinusoidal_table(rows, d).astype(dtype)
        elif config.pe_scheme == PEScheme.HYBRID:
            buffers["temporal_pe_base"] = sinusoidal_table(rows, d).astype(dtype)
            param("temporal_pe", np.zeros((rows, d), dtype=dtype))
        if config.cls_mode == ClsMode.GLOBAL_CLS:
            param("global_cls", rng.normal(0.0, 0.02, size=(1, d)).astype(dtype))

    param("w_cls", _trunc_normal(rng, (d, c), dtype=dtype))
    param("b_cls", np.zeros(c, dtype=dtype))
    return ProbeModel(config=config, params=params, buffers=buffers)


# ---------------------------------------------------------------------------
# token assembly


@dataclass
class TokenSequence:
    """Assembled input tokens plus, per token, the frame it came from."""

    tokens: Tensor          # [L, d] (or [B, L, d] when batched)
    frame_index: np.ndarray  # [L], -1 for the global CLS slot

    def __post_init__(self):
        if self.tokens.shape[-2] != self.frame_index.shape[0]:
            raise ConfigError(
                f"token/frame_index length mismatch: {self.tokens.shape} vs "
                f"{self.frame_index.shape}")


def _validate_dims(config: ProbeConfig, patches: np.ndarray,
                   frame_cls: np.ndarray | None) -> None:
    t, n, d = patches.shape[-3:]
    want = (config.num_frames, config.tokens_per_frame, config.d_model)
    if (t, n, d) != want:
        raise ConfigError(f"feature dims {(t, n, d)} do not match probe config {want}")
    needs_cls = (config.variant == Variant.LINEAR
                 or config.cls_mode == ClsMode.PER_FRAME_CLS)
    if needs_cls and frame_cls is None:
        raise ConfigError(
            f"{config.variant.value} probe requires frame CLS tokens, none in features")


def _pe_term(model: ProbeModel) -> Tensor | None:
    """PE reshaped to broadcast over [B, T, n, d]; None when scheme is none."""
    cfg = model.config
    if cfg.pe_scheme == PEScheme.NONE:
        return None
    t, n, d = cfg.num_frames, cfg.tokens_per_frame, cfg.d_model
    shape = (t, 1, d) if cfg.pe_granularity == PEGranularity.FRAME_WISE else (t, n, d)
    if cfg.pe_scheme == PEScheme.FIXED_SINUSOIDAL:
        return ops.reshape(Tensor(model.buffers["temporal_pe_base"]), shape)
    learned = ops.reshape(model.params["temporal_pe"], shape)
    if cfg.pe_scheme == PEScheme.HYBRID:
        base = ops.reshape(Tensor(model.buffers["temporal_pe_base"]), shape)
        return ops.add(base, learned)
    return learned


def _assemble_batch(model: ProbeModel, patches: np.ndarray,
                    frame_cls: np.ndarray | None) -> TokenSequence:
    cfg = model.config
    b, t, n, d = patches.shape
    x = Tensor(patches)

    if cfg.cls_mode == ClsMode.GLOBAL_CLS and cfg.aggregation == Aggregation.GLOBAL_CLS_ONLY:
        # the patch group is dropped before attention in this ablation
        g = ops.broadcast_to(ops.reshape(model.params["global_cls"], (1, 1, d)), (b, 1, d))
        return TokenSequence(tokens=g, frame_index=token_layout(cfg))

    pe = _pe_term(model)
    if pe is not None:
        x = ops.add(x, pe)  # broadcasts over batch (and over n when frame-wise)

    if cfg.cls_mode == ClsMode.PER_FRAME_CLS:
        cls4 = ops.reshape(Tensor(frame_cls), (b, t, 1, d))
        tok4 = ops.concat([cls4, x], axis=-2)             # [B, T, n+1, d]
        tokens = ops.reshape(tok4, (b, t * (n + 1), d))
    else:
        flat = ops.reshape(x, (b, t * n, d))
        if cfg.aggregation == Aggregation.PATCH_ONLY:
            tokens = flat
        else:
            g = ops.broadcast_to(ops.reshape(model.params["global_cls"], (1, 1, d)), (b, 1, d))
            tokens = ops.concat([g, flat], axis=-2)
    return TokenSequence(tokens=tokens, frame_index=token_layout(cfg))


def assemble_tokens(features: FeatureSequence, model: ProbeModel) -> TokenSequence:
    """Build the [L, d] attention input for one clip per the probe config."""
    _validate_dims(model.config, features.patch_tokens, features.frame_cls)
    patches = features.patch_tokens[None].astype(model.dtype)
    frame_cls = None if features.frame_cls is None else features.frame_cls[None].astype(model.dtype)
    seq = _assemble_batch(model, patches, frame_cls)
    flat = ops.reshape(seq.tokens, seq.tokens.shape[1:])
    return TokenSequence(tokens=flat, frame_index=seq.frame_index)


# ---------------------------------------------------------------------------
# forward


def _split_heads(x: Tensor, h: int) -> Tensor:
    *lead, length, d = x.shape
    y = ops.reshape(x, (*lead, length, h, d // h))
    return ops.swap_axes(y, -3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    y = ops.swap_axes(x, -3, -2)
    *lead, length, h, dh = y.shape
    return ops.reshape(y, (*lead, length, h * dh))


def _mhsa(model: ProbeModel, x: Tensor, capture_attention: bool = False) -> Tensor:
    p = model.params
    h = model.config.num_heads
    q = _split_heads(ops.linear(x, p["w_q"], p["b_q"]), h)
    k = _split_heads(ops.linear(x, p["w_k"], p["b_k"]), h)
    v = _split_heads(ops.linear(x, p["w_v"], p["b_v"]), h)
    if capture_attention:
        att, weights = ops.scaled_dot_attention(q, k, v, return_weights=True)
        model.last_attention = weights.data.copy()
    else:
        att = ops.scaled_dot_attention(q, k, v)
    return ops.linear(_merge_heads(att), p["w_o"], p["b_o"])


def _feed_forward(model: ProbeModel, x: Tensor) -> Tensor:
    p = model.params
    return ops.linear(ops.gelu(ops.linear(x, p["ff_w1"], p["ff_b1"])), p["ff_w2"], p["ff_b2"])


def _attention_block(model: ProbeModel, x: Tensor, capture_attention: bool) -> Tensor:
    style = model.config.block_style
    p = model.params
    if style == BlockStyle.ATTN_ONLY:
        return _mhsa(model, x, capture_attention)
    normed = ops.layer_norm(x, p["ln1_gamma"], p["ln1_beta"])
    h1 = ops.add(x, _mhsa(model, normed, capture_attention))
    if style == BlockStyle.ATTN_LN_SKIP:
        return h1
    ff_in = ops.layer_norm(h1, p["ln2_gamma"], p["ln2_beta"])
    return ops.add(h1, _feed_forward(model, ff_in))


def _forward_arrays(model: ProbeModel, patches: np.ndarray,
                    frame_cls: np.ndarray | None,
                    capture_attention: bool = False) -> Tensor:
    cfg = model.config
    p = model.params
    b = patches.shape[0]

    if cfg.variant == Variant.LINEAR:
        pooled = ops.mean_pool(Tensor(frame_cls))                       # [B, d]
        return ops.linear(pooled, p["w_cls"], p["b_cls"])

    if cfg.variant == Variant.ATTENTIVE:
        seq = _assemble_batch(model, patches, frame_cls)
        tokens = seq.tokens
        h = cfg.num_heads
        d = cfg.d_model
        qb = ops.broadcast_to(ops.reshape(p["query"], (1, 1, d)), (b, 1, d))
        q = _split_heads(ops.linear(qb, p["w_q"], p["b_q"]), h)
        k = _split_heads(ops.linear(tokens, p["w_k"], p["b_k"]), h)
        v = _split_heads(ops.linear(tokens, p["w_v"], p["b_v"]), h)
        if capture_attention:
            att, weights = ops.scaled_dot_attention(q, k, v, return_weights=True)
            model.last_attention = weights.data.copy()
        else:
            att = ops.scaled_dot_attention(q, k, v)
        pooled = ops.linear(_merge_heads(att), p["w_o"], p["b_o"])      # [B, 1, d]
        normed = ops.layer_norm(pooled, p["ln1_gamma"], p["ln1_beta"])
        h1 = ops.add(pooled, _feed_forward(model, normed))
        z = ops.layer_norm(h1, p["ln2_gamma"], p["ln2_beta"])
        flat = ops.reshape(z, (b, d))
        return ops.linear(flat, p["w_cls"], p["b_cls"])

    seq = _assemble_batch(model, patches, frame_cls)
    y = _attention_block(model, seq.tokens, capture_attention)
    pooled = ops.mean_pool(y)                                           # [B, d]
    return ops.linear(pooled, p["w_cls"], p["b_cls"])


def forward_batch(model: ProbeModel, features: list[FeatureSequence],
                  capture_attention: bool = False) -> Tensor:
    """Logits ``[B, C]`` for a batch of clips (all dims validated)."""
    if not features:
        raise ConfigError("forward_batch: empty batch")
    for f in features:
        _validate_dims(model.config, f.patch_tokens, f.frame_cls)
    dtype = model.dtype
    patches = np.stack([f.patch_tokens for f in features]).astype(dtype)
    needs_cls = (model.config.variant in (Variant.LINEAR, Variant.ATTENTIVE)
                 or model.config.cls_mode == ClsMode.PER_FRAME_CLS)
    frame_cls = None
    if needs_cls:
        frame_cls = np.stack([f.frame_cls for f in features]).astype(dtype)
    return _forward_arrays(model, patches, frame_cls, capture_attention)


def forward(model: ProbeModel, features: FeatureSequence,
            capture_attention: bool = False) -> Tensor:
    """Logits ``[C]`` for a single clip."""
    logits = forward_batch(model, [features], capture_attention)
    return ops.reshape(logits, (model.config.num_classes,))


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"STEPCKPT"
CKPT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(model: ProbeModel, path) -> None:
    """Versioned container: config JSON + named little-endian tensors + CRC."""
    body = bytearray()
    body += struct.pack("<H", CKPT_VERSION)
    cfg_bytes = model.config.to_canonical_json().encode("utf-8")
    body += struct.pack("<I", len(cfg_bytes)) + cfg_bytes
    body += struct.pack("<H", len(model.params))
    for name, tensor in model.params.items():
        nm = name.encode("utf-8")
        arr = tensor.data
        code = _DTYPE_CODES[np.dtype(arr.dtype)]
        body += struct.pack("<H", len(nm)) + nm
        body += struct.pack("<BB", code, arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    Path(path).write_bytes(CKPT_MAGIC + bytes(body) + struct.pack("<I", crc))


def load_checkpoint(path) -> ProbeModel:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:8] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: not a probe checkpoint (bad magic)")
    if len(raw) < 8 + 2 + 4:
        raise TruncatedPayloadError(f"{path}: file too short ({len(raw)} bytes)")
    body = raw[8:-4]
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError(f"{path}: checkpoint CRC mismatch")

    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(body):
            raise TruncatedPayloadError(f"{path}: checkpoint body ends early")
        chunk = body[off:off + n]
        off += n
        return chunk

    (version,) = struct.unpack("<H", take(2))
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, reader supports {CKPT_VERSION}")
    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = ProbeConfig.from_dict(json.loads(take(cfg_len).decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: bad config block: {exc}") from exc
    (n_tensors,) = struct.unpack("<H", take(2))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _CODE_DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code} for {name}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = take(count * _CODE_DTYPES[code].itemsize)
        arrays[name] = np.frombuffer(data, dtype=_CODE_DTYPES[code]).reshape(shape).copy()
    if off != len(body):
        raise TruncatedPayloadError(f"{path}: {len(body) - off} trailing bytes in checkpoint")

    model = init_params(config, seed=config.seed)
    model.load_param_arrays(arrays)
    return model
