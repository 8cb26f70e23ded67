"""Generator guarantees: mirror construction, determinism, noise statistics."""

import numpy as np
import pytest

from steprobe.errors import ConfigError
from steprobe.features import corrupt_order, read_features
from steprobe.manifest import load_manifest, load_pairs
from steprobe.synthetic import (SynthConfig, class_names, class_trajectories,
                                generate_synthetic)

SMALL = SynthConfig(num_pairs=2, num_nsym=1, clips_per_class=6, num_frames=4,
                    tokens_per_frame=2, d_model=8, seed=7)


@pytest.fixture(scope="module")
def default_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth_default")
    manifest, split = generate_synthetic(SynthConfig(), out)
    return out, manifest, split


def test_default_config_arithmetic(default_dataset):
    _, manifest, split = default_dataset
    assert manifest.num_classes == 14
    assert len(manifest.clips) == 840
    assert len(split.pairs) == 5
    assert len(split.sym_set) == 10 and len(split.nsym_set) == 4


def test_per_class_clip_counts(default_dataset):
    _, manifest, _ = default_dataset
    assert manifest.class_counts() == [60] * 14


def test_split_sizes(default_dataset):
    _, manifest, _ = default_dataset
    assert manifest.class_counts("train") == [40] * 14
    assert manifest.class_counts("val") == [10] * 14
    assert manifest.class_counts("test") == [10] * 14


def test_written_dataset_passes_manifest_validation(default_dataset):
    out, manifest, split = default_dataset
    loaded = load_manifest(out / "manifest.tsv")  # validates files + dims
    assert loaded.class_names == manifest.class_names
    assert loaded.clips == tuple(manifest.clips)
    pairs = load_pairs(out / "pairs.tsv", loaded.class_names)
    assert pairs.pairs == split.pairs


def test_class_names_layout():
    names = class_names(SMALL)
    assert names == ["pair00_fwd", "pair00_rev", "pair01_fwd", "pair01_rev",
                     "solo00"]


def test_noiseless_reversal_lands_exactly_on_mirror_class(tmp_path):
    cfg = SynthConfig(num_pairs=1, num_nsym=1, clips_per_class=2, num_frames=5,
                      tokens_per_frame=3, d_model=6, noise_std=0.0, seed=3)
    manifest, _ = generate_synthetic(cfg, tmp_path)
    fwd = read_features(manifest.feature_path(manifest.clips[0]))
    rev = read_features(manifest.feature_path(manifest.clips[cfg.clips_per_class]))
    assert manifest.clips[0].label == 0
    assert manifest.clips[cfg.clips_per_class].label == 1
    flipped = corrupt_order(fwd, "reverse")
    assert flipped.patch_tokens.tobytes() == rev.patch_tokens.tobytes()
    assert flipped.frame_cls.tobytes() == rev.frame_cls.tobytes()


def test_pair_trajectories_share_frame_multiset():
    trajs = class_trajectories(SMALL)
    for k in range(SMALL.num_pairs):
        fwd, rev = trajs[2 * k], trajs[2 * k + 1]
        assert np.array_equal(fwd[::-1], rev)


def test_frame_cls_is_patch_mean(default_dataset):
    out, manifest, _ = default_dataset
    feats = read_features(manifest.feature_path(manifest.clips[17]))
    assert np.array_equal(feats.frame_cls, feats.patch_tokens.mean(axis=1))


def test_pair_means_agree_within_noise_tolerance(default_dataset):
    # time-averaged mean frame vector must match between the two classes of
    # a pair: the noiseless parts are the same multiset, so only sampled
    # noise separates them. Direct computation against the law-of-large-
    # numbers bound 3*noise_std/sqrt(T*n*clips).
    out, manifest, split = default_dataset
    cfg = SynthConfig()
    tol = 3.0 * cfg.noise_std / np.sqrt(
        cfg.num_frames * cfg.tokens_per_frame * cfg.clips_per_class)
    for a, b in split.pairs:
        means = []
        for label in (a, b):
            acc = np.zeros(cfg.d_model, dtype=np.float64)
            count = 0
            for clip in manifest.clips:
                if clip.label == label:
                    f = read_features(manifest.feature_path(clip))
                    acc += f.patch_tokens.astype(np.float64).sum(axis=(0, 1))
                    count += f.patch_tokens.shape[0] * f.patch_tokens.shape[1]
            means.append(acc / count)
        diff = means[0] - means[1]
        rms = float(np.sqrt(np.mean(diff ** 2)))
        assert rms < tol, f"pair ({a},{b}): rms mean gap {rms:.2e} >= {tol:.2e}"


def test_nsym_classes_differ_in_mean(default_dataset):
    # class-specific offsets keep non-symmetric classes separable from frame
    # means alone; their pairwise mean gap should dwarf the noise floor
    out, manifest, split = default_dataset
    cfg = SynthConfig()
    nsym = sorted(split.nsym_set)
    means = {}
    for label in nsym:
        acc, count = np.zeros(cfg.d_model), 0
        for clip in manifest.clips:
            if clip.label == label:
                f = read_features(manifest.feature_path(clip))
                acc += f.patch_tokens.astype(np.float64).sum(axis=(0, 1))
                count += f.patch_tokens.shape[0] * f.patch_tokens.shape[1]
        means[label] = acc / count
    for i in nsym:
        for j in nsym:
            if i < j:
                gap = np.sqrt(np.mean((means[i] - means[j]) ** 2))
                assert gap > 0.3, f"classes {i},{j} nearly identical in mean"


def test_trajectories_are_smooth():
    # adjacent frames must sit closer than generic frame pairs do
    trajs = class_trajectories(SynthConfig(seed=0))
    for g in trajs:
        t = g.shape[0]
        adjacent = np.linalg.norm(np.diff(g, axis=0), axis=1).mean()
        far = np.mean([np.linalg.norm(g[i] - g[j])
                       for i in range(t) for j in range(t) if abs(i - j) >= t // 2])
        assert adjacent < far


def test_regeneration_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    ma, _ = generate_synthetic(SMALL, a)
    mb, _ = generate_synthetic(SMALL, b)
    assert (a / "manifest.tsv").read_text() == (b / "manifest.tsv").read_text()
    assert (a / "pairs.tsv").read_text() == (b / "pairs.tsv").read_text()
    for clip in ma.clips:
        assert ma.feature_path(clip).read_bytes() == \
            (b / clip.feature_path).read_bytes()


def test_different_seed_changes_bytes_not_shape(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg2 = SynthConfig(num_pairs=2, num_nsym=1, clips_per_class=6, num_frames=4,
                       tokens_per_frame=2, d_model=8, seed=8)
    ma, _ = generate_synthetic(SMALL, a)
    mb, _ = generate_synthetic(cfg2, b)
    assert ma.class_names == mb.class_names
    assert [c.clip_id for c in ma.clips] == [c.clip_id for c in mb.clips]
    first = ma.clips[0]
    assert ma.feature_path(first).read_bytes() != \
        (b / first.feature_path).read_bytes()


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(num_pairs=0)
    with pytest.raises(ConfigError):
        SynthConfig(noise_std=-0.1)
    with pytest.raises(ConfigError):
        SynthConfig(clips_per_class=-3)
