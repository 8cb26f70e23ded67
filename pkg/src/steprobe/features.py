"""Binary container for frozen per-frame features, plus order corruptions.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic ``STEPFEAT``
    8       2     u16 version (currently 1)
    10      1     u8 flags, bit0 = frame CLS block present
    11      4     u32 T   (frames)
    15      4     u32 n   (patch tokens per frame)
    19      4     u32 d   (embedding dim)
    23      -     float32 patch tokens, row-major [T][n][d]
    ...     -     float32 frame CLS [T][d], only if flags bit0
    end-4   4     u32 CRC-32 of the float payload

The CRC covers everything between the fixed header and the trailing word,
so a single flipped payload byte is caught. Readers raise a distinct error
per failure mode; see :mod:`steprobe.errors`.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    ContractError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"STEPFEAT"
VERSION = 1
FLAG_FRAME_CLS = 0x01

_HEADER = struct.Struct("<8sHBIII")


@dataclass
class FeatureSequence:
    """Frozen features for one clip: ``[T, n, d]`` patches + optional ``[T, d]`` CLS."""

    clip_id: str
    patch_tokens: np.ndarray
    frame_cls: np.ndarray | None = None

    def __post_init__(self):
        self.patch_tokens = np.ascontiguousarray(self.patch_tokens, dtype=np.float32)
        if self.patch_tokens.ndim != 3:
            raise ContractError(
                f"patch_tokens must be [T, n, d], got shape {self.patch_tokens.shape}")
        if min(self.patch_tokens.shape) < 1:
            raise ContractError(f"feature dims must be >=1, got {self.patch_tokens.shape}")
        if self.frame_cls is not None:
            self.frame_cls = np.ascontiguousarray(self.frame_cls, dtype=np.float32)
            t, _, d = self.patch_tokens.shape
            if self.frame_cls.shape != (t, d):
                raise ContractError(
                    f"frame_cls must be [{t}, {d}], got {self.frame_cls.shape}")
        if not np.isfinite(self.patch_tokens).all() or (
                self.frame_cls is not None and not np.isfinite(self.frame_cls).all()):
            raise ContractError(f"non-finite values in features for clip {self.clip_id!r}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.patch_tokens.shape  # (T, n, d)


def write_features(path, features: FeatureSequence) -> None:
    t, n, d = features.dims
    flags = FLAG_FRAME_CLS if features.frame_cls is not None else 0
    payload = features.patch_tokens.astype("<f4").tobytes()
    if features.frame_cls is not None:
        payload += features.frame_cls.astype("<f4").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, flags, t, n, d)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def read_header(path) -> tuple[int, int, tuple[int, int, int]]:
    """Parse just the fixed header: ``(version, flags, (T, n, d))``."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < 8 or raw[:8] != MAGIC:
        raise BadMagicError(f"{path}: not a feature container (bad magic)")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated ({len(raw)} bytes)")
    _, version, flags, t, n, d = _HEADER.unpack(raw)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: container version {version}, reader supports {VERSION}")
    return version, flags, (t, n, d)


def read_features(path, clip_id: str | None = None) -> FeatureSequence:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:8] != MAGIC:
        raise BadMagicError(f"{path}: not a feature container (bad magic)")
    if len(raw) < _HEADER.size + 4:
        raise TruncatedPayloadError(f"{path}: file too short ({len(raw)} bytes)")
    _, version, flags, t, n, d = _HEADER.unpack(raw[:_HEADER.size])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: container version {version}, reader supports {VERSION}")
    if flags & ~FLAG_FRAME_CLS:
        raise FormatError(f"{path}: unknown flag bits 0x{flags:02x}")

    patch_bytes = t * n * d * 4
    cls_bytes = t * d * 4 if flags & FLAG_FRAME_CLS else 0
    expected = _HEADER.size + patch_bytes + cls_bytes + 4
    if len(raw) != expected:
        raise TruncatedPayloadError(
            f"{path}: expected {expected} bytes for dims ({t},{n},{d}), found {len(raw)}")

    payload = raw[_HEADER.size:-4]
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError(f"{path}: payload CRC mismatch")

    patches = np.frombuffer(payload[:patch_bytes], dtype="<f4").reshape(t, n, d)
    frame_cls = None
    if cls_bytes:
        frame_cls = np.frombuffer(payload[patch_bytes:], dtype="<f4").reshape(t, d)
    if not np.isfinite(patches).all() or (frame_cls is not None and not np.isfinite(frame_cls).all()):
        raise FormatError(f"{path}: non-finite values in payload")
    return FeatureSequence(clip_id=clip_id or path.stem,
                           patch_tokens=patches.copy(),
                           frame_cls=None if frame_cls is None else frame_cls.copy())


# ---------------------------------------------------------------------------
# eval-time order corruption

CORRUPTION_MODES = ("reverse", "shuffle")


def corrupt_order(features: FeatureSequence, mode: str, seed: int | None = None) -> FeatureSequence:
    """Permute the frame axis; the per-frame token *content* is untouched.

    ``reverse`` flips time; ``shuffle`` applies a seeded uniform permutation
    (``seed`` is required). Frame CLS rows move with their frames.
    """
    t = features.dims[0]
    if mode == "reverse":
        perm = np.arange(t)[::-1]
    elif mode == "shuffle":
        if seed is None:
            raise ContractError("corrupt_order: shuffle mode requires a seed")
        perm = np.random.default_rng(seed).permutation(t)
    else:
        raise ContractError(f"corrupt_order: unknown mode {mode!r}, expected one of {CORRUPTION_MODES}")
    return FeatureSequence(
        clip_id=features.clip_id,
        patch_tokens=features.patch_tokens[perm].copy(),
        frame_cls=None if features.frame_cls is None else features.frame_cls[perm].copy(),
    )


class FeatureStore:
    """Caching loader that counts file reads (multi-task accounting)."""

    def __init__(self):
        self._cache: dict[str, FeatureSequence] = {}
        self.loads = 0

    def load(self, path, clip_id: str | None = None) -> FeatureSequence:
        key = str(path)
        hit = self._cache.get(key)
        if hit is None:
            hit = read_features(path, clip_id=clip_id)
            self.loads += 1
            self._cache[key] = hit
        return hit

    def clear(self) -> None:
        self._cache.clear()
        self.loads = 0
