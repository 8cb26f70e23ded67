"""Probe heads: forward oracle, invariance properties, counts, checkpoints."""

import math

import numpy as np
import pytest

from gradcheck import fd_check_model
from steprobe import ops
from steprobe.errors import BadMagicError, ChecksumError, ConfigError, VersionMismatchError
from steprobe.features import FeatureSequence
from steprobe.probes import (
    Aggregation,
    BlockStyle,
    ClsMode,
    PEGranularity,
    PEScheme,
    ProbeConfig,
    Variant,
    assemble_tokens,
    count_params,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    pe_rows,
    save_checkpoint,
    sinusoidal_table,
    token_count,
    token_layout,
)


def make_features(rng, t=4, n=2, d=8, clip_id="clip"):
    patches = rng.standard_normal((t, n, d)).astype(np.float32)
    return FeatureSequence(clip_id, patches, patches.mean(axis=1))


def permute_frames(f: FeatureSequence, perm) -> FeatureSequence:
    return FeatureSequence(f.clip_id, f.patch_tokens[perm].copy(),
                           None if f.frame_cls is None else f.frame_cls[perm].copy())


def small_config(variant, **overrides):
    heads = overrides.pop("num_heads", 2)
    return ProbeConfig.for_variant(variant, d_model=8, num_classes=3, num_frames=4,
                                   tokens_per_frame=2, num_heads=heads, **overrides)


# ---------------------------------------------------------------------------
# independent forward oracle


def step_forward_loops(model, features):
    """Explicit-loop re-implementation of the step/selfattn forward at 64-bit.

    Deliberately shares no helper with the production path: assembly, PE,
    per-head attention, pooling, classifier are all plain Python loops.
    """
    cfg = model.config
    t, n, d = cfg.num_frames, cfg.tokens_per_frame, cfg.d_model
    h = cfg.num_heads
    dh = d // h
    p = {k: v.data.astype(np.float64) for k, v in model.params.items()}

    pe = None
    if cfg.pe_scheme == PEScheme.LEARNABLE:
        pe = p["temporal_pe"]
    elif cfg.pe_scheme == PEScheme.FIXED_SINUSOIDAL:
        pe = model.buffers["temporal_pe_base"].astype(np.float64)
    elif cfg.pe_scheme == PEScheme.HYBRID:
        pe = model.buffers["temporal_pe_base"].astype(np.float64) + p["temporal_pe"]

    tokens = []
    if cfg.cls_mode == ClsMode.GLOBAL_CLS and cfg.aggregation == Aggregation.COMBINED:
        tokens.append(p["global_cls"][0].copy())
    for ti in range(t):
        if cfg.cls_mode == ClsMode.PER_FRAME_CLS:
            tokens.append(features.frame_cls[ti].astype(np.float64))
        for j in range(n):
            tok = features.patch_tokens[ti, j].astype(np.float64)
            if pe is not None:
                row = pe[ti] if cfg.pe_granularity == PEGranularity.FRAME_WISE else pe[ti * n + j]
                tok = tok + row
            tokens.append(tok)
    x = np.stack(tokens)
    length = x.shape[0]

    q = np.stack([x[i] @ p["w_q"] + p["b_q"] for i in range(length)])
    k = np.stack([x[i] @ p["w_k"] + p["b_k"] for i in range(length)])
    v = np.stack([x[i] @ p["w_v"] + p["b_v"] for i in range(length)])

    z = np.zeros((length, d))
    for a in range(h):
        sl = slice(a * dh, (a + 1) * dh)
        for i in range(length):
            scores = np.array([np.dot(q[i, sl], k[j, sl]) / math.sqrt(dh) for j in range(length)])
            scores = np.exp(scores - scores.max())
            alpha = scores / scores.sum()
            for j in range(length):
                z[i, sl] += alpha[j] * v[j, sl]
    out = np.stack([z[i] @ p["w_o"] + p["b_o"] for i in range(length)])

    pooled = out.mean(axis=0)
    return pooled @ p["w_cls"] + p["b_cls"]


@pytest.mark.parametrize("variant,overrides", [
    (Variant.STEP, {}),
    (Variant.STEP, {"pe_scheme": PEScheme.FIXED_SINUSOIDAL}),
    (Variant.STEP, {"pe_scheme": PEScheme.HYBRID}),
    (Variant.STEP, {"pe_granularity": PEGranularity.TOKEN_WISE}),
    (Variant.STEP, {"aggregation": Aggregation.PATCH_ONLY}),
    (Variant.SELF_ATTN, {}),
    (Variant.SELF_ATTN, {"pe_scheme": PEScheme.LEARNABLE}),
])
def test_forward_matches_loop_oracle(variant, overrides):
    rng = np.random.default_rng(11)
    cfg = small_config(variant, **overrides)
    model = init_params(cfg, seed=5, dtype=np.float64)
    feats = make_features(rng)
    got = forward(model, feats).data
    expected = step_forward_loops(model, feats)
    np.testing.assert_allclose(got, expected, atol=1e-6)


def test_batched_forward_matches_single_clip():
    rng = np.random.default_rng(2)
    cfg = small_config(Variant.STEP)
    model = init_params(cfg, seed=0)
    clips = [make_features(rng, clip_id=f"c{i}") for i in range(5)]
    batched = forward_batch(model, clips).data
    for i, f in enumerate(clips):
        single = forward(model, f).data
        np.testing.assert_allclose(batched[i], single, atol=1e-5)


# ---------------------------------------------------------------------------
# permutation invariance / order sensitivity


@pytest.mark.parametrize("variant", [Variant.LINEAR, Variant.ATTENTIVE, Variant.SELF_ATTN])
def test_order_blind_probes_are_permutation_invariant(variant):
    rng = np.random.default_rng(3)
    cfg = small_config(variant)
    model = init_params(cfg, seed=7)
    for trial in range(10):
        f = make_features(rng, clip_id=f"c{trial}")
        base = forward(model, f).data
        for perm in (np.arange(4)[::-1], rng.permutation(4)):
            permuted = forward(model, permute_frames(f, perm)).data
            assert np.max(np.abs(base - permuted)) < 1e-5


def test_step_is_order_sensitive():
    rng = np.random.default_rng(4)
    cfg = small_config(Variant.STEP)
    model = init_params(cfg, seed=9)
    # Non-degenerate random parameters: the tiny near-init weights squash the
    # PE signal below float32 resolution at the logits, so draw at std 0.5.
    prng = np.random.default_rng(90)
    for p in model.params.values():
        p.data = prng.normal(0.0, 0.5, size=p.data.shape).astype(p.data.dtype)
    hits = 0
    for trial in range(20):
        f = make_features(rng, clip_id=f"c{trial}")
        base = forward(model, f).data
        rev = forward(model, permute_frames(f, np.arange(4)[::-1])).data
        if np.max(np.abs(base - rev)) > 1e-6:
            hits += 1
    assert hits >= 19


def test_step_with_equal_pe_and_no_cls_is_invariant():
    # degenerate check: all temporal rows equal + cls contribution removed
    # must behave permutation-invariantly
    rng = np.random.default_rng(5)
    cfg = small_config(Variant.STEP, aggregation=Aggregation.PATCH_ONLY)
    model = init_params(cfg, seed=1)
    model.params["temporal_pe"].data[:] = model.params["temporal_pe"].data[0]
    for trial in range(10):
        f = make_features(rng, clip_id=f"c{trial}")
        base = forward(model, f).data
        permuted = forward(model, permute_frames(f, rng.permutation(4))).data
        assert np.max(np.abs(base - permuted)) < 1e-5


# ---------------------------------------------------------------------------
# assembly and layout


def test_token_counts_per_mode():
    t, n = 4, 2
    assert token_count(small_config(Variant.STEP)) == 1 + t * n
    assert token_count(small_config(Variant.STEP, aggregation=Aggregation.PATCH_ONLY)) == t * n
    assert token_count(small_config(Variant.STEP, aggregation=Aggregation.GLOBAL_CLS_ONLY)) == 1
    assert token_count(small_config(Variant.SELF_ATTN)) == t * (n + 1)
    assert token_count(small_config(Variant.ATTENTIVE)) == t * (n + 1)


def test_frame_index_layout():
    layout = token_layout(small_config(Variant.STEP))
    assert layout[0] == -1
    assert list(layout[1:]) == [0, 0, 1, 1, 2, 2, 3, 3]
    diffs = np.diff(layout[1:])
    assert np.all(diffs >= 0)

    per_frame = token_layout(small_config(Variant.SELF_ATTN))
    assert list(per_frame) == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]


def test_assemble_tokens_step_contents():
    rng = np.random.default_rng(8)
    cfg = small_config(Variant.STEP)
    model = init_params(cfg, seed=2)
    f = make_features(rng)
    seq = assemble_tokens(f, model)
    assert seq.tokens.shape == (9, 8)
    np.testing.assert_allclose(seq.tokens.data[0], model.params["global_cls"].data[0], atol=1e-6)
    pe = model.params["temporal_pe"].data
    # token 1 is frame 0 patch 0 plus the frame-0 temporal row; no PE on CLS
    np.testing.assert_allclose(seq.tokens.data[1], f.patch_tokens[0, 0] + pe[0], atol=1e-6)
    np.testing.assert_allclose(seq.tokens.data[8], f.patch_tokens[3, 1] + pe[3], atol=1e-6)


def test_global_cls_only_drops_patches_before_attention():
    rng = np.random.default_rng(9)
    cfg = small_config(Variant.STEP, aggregation=Aggregation.GLOBAL_CLS_ONLY)
    model = init_params(cfg, seed=3)
    a = forward(model, make_features(rng, clip_id="a")).data
    b = forward(model, make_features(rng, clip_id="b")).data
    np.testing.assert_allclose(a, b, atol=1e-7)  # input-independent by construction


def test_missing_frame_cls_raises_for_cls_consumers():
    rng = np.random.default_rng(10)
    patches = rng.standard_normal((4, 2, 8)).astype(np.float32)
    f = FeatureSequence("c", patches, None)
    for variant in (Variant.LINEAR, Variant.ATTENTIVE, Variant.SELF_ATTN):
        model = init_params(small_config(variant), seed=0)
        with pytest.raises(ConfigError):
            forward(model, f)
    # step never needs frame CLS
    model = init_params(small_config(Variant.STEP), seed=0)
    assert forward(model, f).shape == (3,)


def test_dim_mismatch_raises():
    rng = np.random.default_rng(11)
    f = make_features(rng, t=5)  # config expects 4 frames
    model = init_params(small_config(Variant.STEP), seed=0)
    with pytest.raises(ConfigError):
        forward(model, f)


# ---------------------------------------------------------------------------
# configs


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(Variant.STEP, num_heads=3)  # 8 % 3 != 0
    with pytest.raises(ConfigError):
        small_config(Variant.STEP, cls_mode=ClsMode.PER_FRAME_CLS)
    with pytest.raises(ConfigError):
        small_config(Variant.SELF_ATTN, cls_mode=ClsMode.GLOBAL_CLS)
    with pytest.raises(ConfigError):
        small_config(Variant.SELF_ATTN, aggregation=Aggregation.PATCH_ONLY)


def test_config_round_trips_through_json():
    cfg = small_config(Variant.STEP, pe_scheme=PEScheme.HYBRID)
    import json

    again = ProbeConfig.from_dict(json.loads(cfg.to_canonical_json()))
    assert again == cfg


def test_selfattn_default_has_no_pe_but_ladder_rung_is_constructible():
    assert small_config(Variant.SELF_ATTN).pe_scheme == PEScheme.NONE
    rung = small_config(Variant.SELF_ATTN, pe_scheme=PEScheme.LEARNABLE)
    assert rung.pe_scheme == PEScheme.LEARNABLE


# ---------------------------------------------------------------------------
# parameter counts


def test_step_param_count_closed_form_at_reference_dims():
    cfg = ProbeConfig.for_variant("step", d_model=768, num_classes=30, num_frames=16,
                                  tokens_per_frame=256, num_heads=12)
    expected = 4 * (768 ** 2 + 768) + 16 * 768 + 768 + (768 * 30 + 30)
    assert count_params(cfg) == expected == 2_398_494
    # within 10% of the 2.6M reference budget
    assert abs(count_params(cfg) - 2.6e6) / 2.6e6 <= 0.10


def test_linear_param_count():
    cfg = ProbeConfig.for_variant("linear", d_model=768, num_classes=30, num_frames=16,
                                  tokens_per_frame=256)
    assert count_params(cfg) == 768 * 30 + 30 == 23_070


def test_attentive_param_count_near_budget():
    cfg = ProbeConfig.for_variant("attentive", d_model=768, num_classes=30, num_frames=16,
                                  tokens_per_frame=256, num_heads=12)
    assert abs(count_params(cfg) - 7.3e6) / 7.3e6 < 0.05


def test_block_style_param_deltas():
    base = small_config(Variant.STEP)
    d = base.d_model
    ln_skip = base.with_overrides(block_style=BlockStyle.ATTN_LN_SKIP)
    full = base.with_overrides(block_style=BlockStyle.FULL_BLOCK)
    assert count_params(ln_skip) - count_params(base) == 2 * d
    assert count_params(full) - count_params(base) == (2 * d * 4 * d + 4 * d + d) + 2 * (2 * d)


def test_pe_granularity_row_counts():
    frame = small_config(Variant.STEP)
    token = small_config(Variant.STEP, pe_granularity=PEGranularity.TOKEN_WISE)
    assert pe_rows(frame) == 4
    assert pe_rows(token) == 8
    assert count_params(token) - count_params(frame) == (8 - 4) * frame.d_model
    m = init_params(token, seed=0)
    assert m.params["temporal_pe"].shape == (8, frame.d_model)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("style", list(BlockStyle))
def test_count_params_matches_enumeration(variant, style):
    cfg = small_config(variant, **({} if variant in (Variant.LINEAR, Variant.ATTENTIVE)
                                   else {"block_style": style}))
    model = init_params(cfg, seed=0)
    assert model.count_params() == count_params(cfg)


def test_hybrid_pe_offset_initialized_to_zero():
    cfg = small_config(Variant.STEP, pe_scheme=PEScheme.HYBRID)
    model = init_params(cfg, seed=0)
    assert np.all(model.params["temporal_pe"].data == 0)
    assert "temporal_pe_base" in model.buffers
    # hybrid starts exactly at the fixed encoding
    fixed = init_params(small_config(Variant.STEP, pe_scheme=PEScheme.FIXED_SINUSOIDAL), seed=0)
    np.testing.assert_array_equal(model.buffers["temporal_pe_base"],
                                  fixed.buffers["temporal_pe_base"])


def test_sinusoidal_row_zero_alternates_zero_one():
    table = sinusoidal_table(4, 8)
    np.testing.assert_allclose(table[0], [0, 1, 0, 1, 0, 1, 0, 1], atol=1e-7)


# ---------------------------------------------------------------------------
# gradients through full probes


def test_step_gradients_match_fd():
    rng = np.random.default_rng(1)
    cfg = ProbeConfig.for_variant("step", d_model=8, num_classes=2, num_frames=3,
                                  tokens_per_frame=2, num_heads=2)
    model = init_params(cfg, seed=4, dtype=np.float64)
    patches = rng.standard_normal((3, 2, 8)).astype(np.float64)
    feats = FeatureSequence("c", patches)
    err = fd_check_model(model, feats, label=1)
    assert err < 1e-4


def test_full_block_gradients_match_fd():
    rng = np.random.default_rng(2)
    cfg = ProbeConfig.for_variant("step", d_model=8, num_classes=2, num_frames=3,
                                  tokens_per_frame=2, num_heads=2,
                                  block_style=BlockStyle.FULL_BLOCK)
    model = init_params(cfg, seed=6, dtype=np.float64)
    feats = FeatureSequence("c", rng.standard_normal((3, 2, 8)))
    # eps grid: at 1e-3 alone the truncation error through the stacked ln/gelu
    # path lands right at the tolerance (confirmed quadratic in eps, so not a
    # backward bug), while some gradients are too small for the smallest step.
    assert fd_check_model(model, feats, label=0, eps=(1e-3, 1e-4, 1e-5)) < 1e-4


def test_attentive_gradients_match_fd():
    rng = np.random.default_rng(3)
    cfg = ProbeConfig.for_variant("attentive", d_model=8, num_classes=2, num_frames=3,
                                  tokens_per_frame=2, num_heads=2)
    model = init_params(cfg, seed=8, dtype=np.float64)
    patches = rng.standard_normal((3, 2, 8))
    feats = FeatureSequence("c", patches, patches.mean(axis=1))
    # eps grid, same reasoning as the full-block check: ff_b2 needs the small
    # step (curvature), w_q the large one (1e-9-scale grads vs fd round-off)
    assert fd_check_model(model, feats, label=1, eps=(1e-3, 1e-4, 1e-5)) < 1e-4


def test_every_step_parameter_receives_gradient():
    from steprobe.tensor import Tape, backward

    rng = np.random.default_rng(6)
    cfg = small_config(Variant.STEP)
    model = init_params(cfg, seed=12)
    feats = [make_features(rng, clip_id=f"c{i}") for i in range(4)]
    with Tape():
        loss = ops.cross_entropy(forward_batch(model, feats), np.array([0, 1, 2, 0]))
    backward(loss)
    for name, p in model.params.items():
        assert np.linalg.norm(p.grad) > 0, f"no gradient reached {name}"


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    cfg = small_config(Variant.STEP, pe_scheme=PEScheme.HYBRID)
    model = init_params(cfg, seed=13)
    path = tmp_path / "probe.stepckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == cfg
    for k in model.params:
        np.testing.assert_array_equal(loaded.params[k].data, model.params[k].data)
    np.testing.assert_array_equal(loaded.buffers["temporal_pe_base"],
                                  model.buffers["temporal_pe_base"])


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.stepckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        load_checkpoint(path)


def test_checkpoint_flipped_byte_fails_crc(tmp_path):
    model = init_params(small_config(Variant.STEP), seed=0)
    path = tmp_path / "probe.stepckpt"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_checkpoint(path)


def test_checkpoint_version_gate(tmp_path):
    import struct
    import zlib

    model = init_params(small_config(Variant.STEP), seed=0)
    path = tmp_path / "probe.stepckpt"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[8:10] = struct.pack("<H", 99)
    body = bytes(raw[8:-4])
    raw[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)
