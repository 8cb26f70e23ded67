"""Shared clip-building helpers for the extractor tests.

Tests exercise both input layouts the tool accepts: directories of image
frames and actual video files (written with OpenCV's mp4v codec, which the
test environment supports).
"""

from pathlib import Path

import cv2
import numpy as np


def write_frame_dir(path: Path, frames) -> Path:
    """Write a list of HxWx3 uint8 BGR arrays as numbered PNGs."""
    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        ok = cv2.imwrite(str(path / f"frame_{i:04d}.png"), frame)
        assert ok, f"could not write test frame {i}"
    return path


def write_video(path: Path, frames, fps: int = 10) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = frames[0].shape[:2]
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"mp4v"), fps, (w, h))
    assert writer.isOpened(), "mp4v writer unavailable in test environment"
    for frame in frames:
        writer.write(frame)
    writer.release()
    return path


def gradient_frames(count: int, height: int = 48, width: int = 64):
    """Frames with a horizontal ramp that drifts over time, so content
    actually changes frame to frame."""
    out = []
    for i in range(count):
        ramp = np.clip(np.arange(width)[None, :, None] * 3 + i * 17, 0, 255)
        out.append(np.broadcast_to(ramp, (height, width, 3)).astype(np.uint8).copy())
    return out


def solid_frames(count: int, bgr=(30, 180, 90), height: int = 48, width: int = 64):
    frame = np.full((height, width, 3), bgr, dtype=np.uint8)
    return [frame.copy() for _ in range(count)]
