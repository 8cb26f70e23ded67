"""Synthetic benchmark with nearly symmetric action pairs.

Each pair shares one smooth latent trajectory; the second class of the pair
plays it backwards. Because both classes sample the same frame vectors (in
opposite order), the noiseless frame multiset is identical within a pair and
no permutation-invariant classifier can beat chance on the pair. Temporal
order is the only separating signal.

Trajectories are a per-pair constant offset plus a small bank of random
low-frequency sinusoids: the offset lets order-blind probes at least tell the
pairs apart (so their symmetric accuracy sits at one-of-two chance rather than
one-of-2P), and the sinusoids make adjacent frames correlate the way video
features do while still carrying direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .features import FeatureSequence, write_features
from .manifest import (ClipRecord, DatasetManifest, SymmetricSplit,
                       write_manifest, write_pairs)


@dataclass(frozen=True)
class SynthConfig:
    num_pairs: int = 5
    num_nsym: int = 4
    clips_per_class: int = 60
    num_frames: int = 16
    tokens_per_frame: int = 8
    d_model: int = 64
    basis_size: int = 3  # sinusoids per trajectory
    noise_std: float = 0.1
    seed: int = 42

    def __post_init__(self):
        for name in ("num_pairs", "num_nsym", "clips_per_class", "num_frames",
                     "tokens_per_frame", "d_model", "basis_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")

    @property
    def num_classes(self) -> int:
        return 2 * self.num_pairs + self.num_nsym


def class_names(config: SynthConfig) -> list[str]:
    names = []
    for k in range(config.num_pairs):
        names.append(f"pair{k:02d}_fwd")
        names.append(f"pair{k:02d}_rev")
    for j in range(config.num_nsym):
        names.append(f"solo{j:02d}")
    return names


def _trajectory(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    """One smooth latent trajectory, shape (T, d) float64.

    Constant offset plus ``basis_size`` sinusoids with frequencies in
    [0.5, 2] cycles over the clip, random phase, unit-scale directions.
    """
    t_axis = np.arange(config.num_frames, dtype=np.float64)
    span = max(config.num_frames - 1, 1)
    g = np.tile(rng.normal(0.0, 1.0, config.d_model), (config.num_frames, 1))
    for _ in range(config.basis_size):
        freq = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        direction = rng.normal(0.0, 1.0, config.d_model) / math.sqrt(config.basis_size)
        wave = np.sin(2.0 * math.pi * freq * t_axis / span + phase)
        g += wave[:, None] * direction[None, :]
    return g


def class_trajectories(config: SynthConfig) -> list[np.ndarray]:
    """Noiseless per-class frame vectors, shape (T, d) float32 each.

    Class 2k and 2k+1 views are the same float32 array in opposite frame
    order, so the mirror relation is exact at the byte level.
    """
    rng = np.random.default_rng(config.seed)
    out: list[np.ndarray] = []
    for _ in range(config.num_pairs):
        g = _trajectory(rng, config).astype(np.float32)
        out.append(g)
        out.append(g[::-1].copy())
    for _ in range(config.num_nsym):
        out.append(_trajectory(rng, config).astype(np.float32))
    return out


def _split_sizes(clips_per_class: int) -> tuple[int, int, int]:
    n_val = clips_per_class // 6
    n_test = clips_per_class // 6
    return clips_per_class - n_val - n_test, n_val, n_test


def make_clip(trajectory: np.ndarray, rng: np.random.Generator,
              config: SynthConfig, clip_id: str) -> FeatureSequence:
    """Noisy clip around a noiseless trajectory; frame CLS = noisy patch mean."""
    t, d = trajectory.shape
    noise = rng.normal(0.0, config.noise_std,
                       (t, config.tokens_per_frame, d)).astype(np.float32)
    patches = trajectory[:, None, :] + noise
    return FeatureSequence(clip_id, patches, patches.mean(axis=1))


def generate_synthetic(config: SynthConfig, out_dir) -> tuple[DatasetManifest, SymmetricSplit]:
    """Write feature files, manifest, and pair list under ``out_dir``.

    Deterministic: the same config writes byte-identical files. Returns the
    manifest (already written to ``out_dir/manifest.tsv``) and the pair split
    (``out_dir/pairs.tsv``).
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    names = class_names(config)
    trajectories = class_trajectories(config)
    # separate stream for noise so trajectory draws stay stable if clip
    # counts change
    noise_rng = np.random.default_rng(config.seed + 1)
    n_train, n_val, _ = _split_sizes(config.clips_per_class)

    clips: list[ClipRecord] = []
    for label, name in enumerate(names):
        for i in range(config.clips_per_class):
            clip_id = f"{name}_{i:03d}"
            rel = f"features/{clip_id}.stepfeat"
            feats = make_clip(trajectories[label], noise_rng, config, clip_id)
            write_features(out_dir / rel, feats)
            if i < n_train:
                split = "train"
            elif i < n_train + n_val:
                split = "val"
            else:
                split = "test"
            clips.append(ClipRecord(clip_id, rel, label, split))

    manifest = DatasetManifest(
        (config.num_frames, config.tokens_per_frame, config.d_model),
        tuple(names), tuple(clips), root=out_dir)
    split = SymmetricSplit(
        tuple((2 * k, 2 * k + 1) for k in range(config.num_pairs)),
        config.num_classes)
    write_manifest(out_dir / "manifest.tsv", manifest)
    write_pairs(out_dir / "pairs.tsv", split, names)
    return manifest, split
