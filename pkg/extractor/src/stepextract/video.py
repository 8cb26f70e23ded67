"""Clip decoding and preprocessing.

A clip is either a video file (anything cv2 can open) or a directory of
frame images ordered by filename. Decoding failures are reported as
``UndecodableClip`` so the extraction loop can skip the clip with a
warning instead of aborting the run.

Preprocessing follows the usual published recipe for ViT backbones:
shorter side resized to the target resolution with bicubic interpolation,
center crop to a square, scale to [0, 1], then per-channel normalization
with the backbone's constants. cv2 decodes to BGR; channels are flipped
to RGB before normalization.
"""

from pathlib import Path

import cv2
import numpy as np

from .sampling import sample_indices

FRAME_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class UndecodableClip(Exception):
    """The clip cannot be read; callers skip it, they do not abort."""


def _frame_dir_files(path: Path) -> list[Path]:
    files = sorted(p for p in path.iterdir()
                   if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise UndecodableClip(f"{path}: no frame images in directory")
    return files


def _read_image(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise UndecodableClip(f"{path}: unreadable image")
    return img


def _load_video_frames(path: Path, wanted: list[int]) -> list[np.ndarray]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        cap.release()
        raise UndecodableClip(f"{path}: cannot open video")
    try:
        want = set(wanted)
        got: dict[int, np.ndarray] = {}
        idx = 0
        while len(got) < len(want):
            ok, frame = cap.read()
            if not ok:
                break
            if idx in want:
                got[idx] = frame
            idx += 1
        missing = want - set(got)
        if missing:
            raise UndecodableClip(
                f"{path}: decode stopped before frame {min(missing)}")
        return [got[i] for i in wanted]
    finally:
        cap.release()


def _count_video_frames(path: Path) -> int:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        cap.release()
        raise UndecodableClip(f"{path}: cannot open video")
    try:
        count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if count > 0:
            return count
        # some containers do not carry a frame count; count by grabbing
        count = 0
        while cap.grab():
            count += 1
        if count == 0:
            raise UndecodableClip(f"{path}: no decodable frames")
        return count
    finally:
        cap.release()


def load_clip_frames(path, num_frames: int) -> list[np.ndarray]:
    """T sampled frames as BGR uint8 arrays, in temporal order."""
    path = Path(path)
    if path.is_dir():
        files = _frame_dir_files(path)
        picks = sample_indices(len(files), num_frames)
        return [_read_image(files[i]) for i in picks]
    if not path.exists():
        raise UndecodableClip(f"{path}: no such file")
    total = _count_video_frames(path)
    picks = sample_indices(total, num_frames)
    return [f.copy() for f in _load_video_frames(path, picks)]


def preprocess(frames: list[np.ndarray], resolution: int,
               mean: tuple[float, float, float],
               std: tuple[float, float, float]) -> np.ndarray:
    """BGR uint8 frames to a ``[T, 3, R, R]`` float32 normalized batch."""
    out = np.empty((len(frames), 3, resolution, resolution), dtype=np.float32)
    mean_arr = np.asarray(mean, dtype=np.float32).reshape(3, 1, 1)
    std_arr = np.asarray(std, dtype=np.float32).reshape(3, 1, 1)
    for i, frame in enumerate(frames):
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise UndecodableClip(f"frame {i} is not 3-channel, shape {frame.shape}")
        h, w = frame.shape[:2]
        scale = resolution / min(h, w)
        resized = cv2.resize(frame, (max(resolution, round(w * scale)),
                                     max(resolution, round(h * scale))),
                             interpolation=cv2.INTER_CUBIC)
        rh, rw = resized.shape[:2]
        top = (rh - resolution) // 2
        left = (rw - resolution) // 2
        crop = resized[top:top + resolution, left:left + resolution]
        rgb = crop[:, :, ::-1].astype(np.float32) / 255.0
        out[i] = (rgb.transpose(2, 0, 1) - mean_arr) / std_arr
    return out
