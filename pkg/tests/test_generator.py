import numpy as np
import pytest

from lesionforge.errors import ConfigurationError
from lesionforge.imaging import uniform_histogram
from lesionforge.nn.generator import (
    GeneratorConfig,
    GeneratorInput,
    default_channel_schedule,
    forward_batch,
    generator_forward,
    generator_init,
    shape_audit,
    stat_shapes,
    tensor_shapes,
)

TINY = GeneratorConfig(patch_size=8, depth=2, base_channels=4, hist_bins=8, hist_dense_units=8, bridge_units=6)


def _tiny_inputs(n=2, seed=0, cfg=TINY):
    rng = np.random.default_rng(seed)
    masks = (rng.random((n, 1, cfg.patch_size, cfg.patch_size)) < 0.3).astype(np.uint8)
    hists = rng.random((n, cfg.hist_bins))
    hists /= hists.sum(axis=1, keepdims=True)
    return masks, hists


def test_channel_schedule_caps_at_8x():
    assert default_channel_schedule(6, 64) == (64, 128, 256, 512, 512, 512)
    assert default_channel_schedule(2, 4) == (4, 8)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        GeneratorConfig(patch_size=48)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(patch_size=8, depth=9)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(bridge_mode="huge")
    with pytest.raises(ConfigurationError):
        GeneratorConfig(dropout_rate=1.0)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(patch_size=8, depth=2, channel_schedule=(4, 8, 16))


def test_tensor_shapes_cover_every_block():
    shapes = tensor_shapes(TINY)
    assert shapes["enc0.w"] == (4, 1, 4, 4)
    assert "enc0.gamma" not in shapes  # first block skips batch norm
    assert shapes["enc1.gamma"] == (8,)
    assert shapes["dec0.w"][1] == 8 + 4  # bottleneck 8 up, skip 4
    assert shapes["dec1.w"][1] == 4  # last block has no skip
    assert shapes["hist.w"] == (8, 8)
    assert shapes["reduce.w"] == (1, 4, 1, 1)
    assert shapes["bridge1.w"] == (64, 6)
    assert shapes["bridge2.w"] == (6 + 8, 64)
    assert shapes["out.w"] == (1, 4 + 1, 3, 3)
    assert set(stat_shapes(TINY)) == {"enc1.mean", "enc1.var", "dec0.mean", "dec0.var", "dec1.mean", "dec1.var"}


def test_init_matches_declared_shapes():
    params = generator_init(TINY, seed=0)
    shapes = tensor_shapes(TINY)
    assert set(params.tensors) == set(shapes)
    for name, arr in params.tensors.items():
        assert arr.shape == shapes[name]
        assert arr.dtype == np.float32
    assert np.all(params.tensors["enc1.gamma"] == 1.0)
    assert np.all(params.tensors["enc1.beta"] == 0.0)
    # weights come from N(0, 0.02)
    w = params.tensors["dec0.w"]
    assert 0.0 < w.std() < 0.1


def test_init_deterministic_per_seed():
    a = generator_init(TINY, seed=5)
    b = generator_init(TINY, seed=5)
    c = generator_init(TINY, seed=6)
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)
    assert any(not np.array_equal(a.tensors[k], c.tensors[k]) for k in a.tensors)


def test_forward_shape_and_range():
    params = generator_init(TINY, seed=1)
    masks, hists = _tiny_inputs(3)
    out, _ = forward_batch(params, masks, hists, mode="eval")
    assert out.shape == (3, 1, 8, 8)
    assert np.all(out >= -1.0) and np.all(out <= 1.0)


def test_forward_eval_is_pure_and_deterministic():
    params = generator_init(TINY, seed=1)
    masks, hists = _tiny_inputs()
    stats_before = {k: v.copy() for k, v in params.stats.items()}
    a, _ = forward_batch(params, masks, hists, mode="eval")
    b, _ = forward_batch(params, masks, hists, mode="eval")
    assert np.array_equal(a, b)
    for k, v in params.stats.items():
        assert np.array_equal(v, stats_before[k])


def test_train_mode_updates_running_stats():
    params = generator_init(TINY, seed=1)
    masks, hists = _tiny_inputs()
    before = {k: v.copy() for k, v in params.stats.items()}
    forward_batch(params, masks, hists, mode="train", dropout_seed=0)
    assert any(not np.array_equal(params.stats[k], before[k]) for k in before)


def test_dropout_seed_controls_train_forward():
    params = generator_init(TINY, seed=1)
    masks, hists = _tiny_inputs()
    a, _ = forward_batch(params, masks, hists, mode="train", dropout_seed=(3, 7))
    params2 = generator_init(TINY, seed=1)
    b, _ = forward_batch(params2, masks, hists, mode="train", dropout_seed=(3, 7))
    params3 = generator_init(TINY, seed=1)
    c, _ = forward_batch(params3, masks, hists, mode="train", dropout_seed=(3, 8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_output_depends_on_histogram():
    params = generator_init(TINY, seed=2)
    masks, hists = _tiny_inputs()
    a, _ = forward_batch(params, masks, hists, mode="eval")
    other = np.roll(hists, 3, axis=1)
    b, _ = forward_batch(params, masks, other, mode="eval")
    assert not np.allclose(a, b)


def test_output_depends_on_mask():
    params = generator_init(TINY, seed=2)
    masks, hists = _tiny_inputs()
    flipped = 1 - masks
    a, _ = forward_batch(params, masks, hists, mode="eval")
    b, _ = forward_batch(params, flipped, hists, mode="eval")
    assert not np.allclose(a, b)


def test_forward_rejects_bad_inputs():
    params = generator_init(TINY, seed=0)
    masks, hists = _tiny_inputs()
    with pytest.raises(ValueError):
        forward_batch(params, masks[:, :, :4], hists, mode="eval")
    with pytest.raises(ValueError):
        forward_batch(params, masks, hists * 2.0, mode="eval")
    with pytest.raises(ValueError):
        forward_batch(params, masks, hists, mode="sideways")


def test_single_sample_wrapper():
    params = generator_init(TINY, seed=3)
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[2:6, 2:6] = 1
    out = generator_forward(params, GeneratorInput(mask, uniform_histogram(8)))
    assert out.shape == (8, 8)
    batched, _ = forward_batch(params, mask[None, None], uniform_histogram(8)[None], mode="eval")
    assert np.array_equal(out, batched[0, 0])


def test_shape_audit_compressed_stays_quiet():
    audit = shape_audit(GeneratorConfig(patch_size=128, bridge_mode="compressed"))
    assert audit.warnings == ()
    assert audit.shapes["bridge2.w"] == (256 + 100, 128 * 128)


def test_shape_audit_literal_flags_dominant_bridge():
    audit = shape_audit(GeneratorConfig(patch_size=128, bridge_mode="literal"))
    # flattened 64-channel 128x128 map into the first dense layer
    assert audit.shapes["bridge1.w"] == (64 * 128 * 128, 256)
    assert audit.bridge_params > 10_000_000
    assert audit.warnings and "dominant" in audit.warnings[0]
    assert any("total trainable parameters" in line for line in audit.lines())
