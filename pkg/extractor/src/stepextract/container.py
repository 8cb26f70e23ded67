"""Writers for the feature container and dataset manifest.

These mirror the downstream toolkit's on-disk contract byte for byte:

container   ``STEPFEAT`` magic, u16 version 1, u8 flags (bit 0 = frame-CLS
            block present), u32 T/n/d, float32 LE payload (patches, then
            CLS), trailing CRC32 of the payload.
manifest    tab-separated text: a ``steprobe-manifest`` version line, class
            count, dims, the class registry, one row per clip.

The conformance tests read everything back through the downstream package
itself, which is the authority on the format.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"STEPFEAT"
VERSION = 1
FLAG_FRAME_CLS = 0x01
_HEADER = struct.Struct("<8sHBIII")

MANIFEST_HEADER = "steprobe-manifest"
MANIFEST_VERSION = 1


def write_container(path, patch_tokens: np.ndarray,
                    frame_cls: np.ndarray | None) -> None:
    patches = np.ascontiguousarray(patch_tokens, dtype="<f4")
    if patches.ndim != 3:
        raise DataError(f"patch tokens must be [T, n, d], got {patches.shape}")
    if not np.isfinite(patches).all():
        raise DataError(f"{path}: non-finite patch features")
    t, n, d = patches.shape
    flags = 0
    payload = patches.tobytes()
    if frame_cls is not None:
        cls = np.ascontiguousarray(frame_cls, dtype="<f4")
        if cls.shape != (t, d):
            raise DataError(f"frame CLS must be [{t}, {d}], got {cls.shape}")
        if not np.isfinite(cls).all():
            raise DataError(f"{path}: non-finite CLS features")
        flags |= FLAG_FRAME_CLS
        payload += cls.tobytes()
    header = _HEADER.pack(MAGIC, VERSION, flags, t, n, d)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def write_manifest(path, dims: tuple[int, int, int],
                   class_names: list[str],
                   rows: list[tuple[str, str, str, str]]) -> None:
    """``rows`` are (clip_id, feature_path_relative, class_name, split)."""
    t, n, d = dims
    lines = [f"{MANIFEST_HEADER}\t{MANIFEST_VERSION}",
             f"classes\t{len(class_names)}",
             f"dims\t{t}\t{n}\t{d}"]
    for idx, name in enumerate(class_names):
        lines.append(f"class\t{idx}\t{name}")
    for clip_id, feature_path, class_name, split in rows:
        lines.append(f"clip\t{clip_id}\t{feature_path}\t{class_name}\t{split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
