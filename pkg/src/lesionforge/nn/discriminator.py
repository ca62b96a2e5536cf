"""Patch-based conditional discriminator.

Judges (mask, image) pairs with a grid of logits, each covering a local
receptive field.  Blocks are 4x4 convolutions (batch norm except the first,
leaky activations) following the schedule in the config; a final 4x4
convolution maps to a single logits channel.  The histogram is not part of
the input by default; ``use_histogram`` adds it as a dense-projected third
channel (parameters exist only when enabled).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..imaging import N_BINS
from . import ops

_INIT_TAG = 0x9E03

DEFAULT_SCHEDULE = ((64, 2), (128, 2), (256, 2), (512, 1))


def default_schedule_for(patch_size: int) -> tuple[tuple[int, int], ...]:
    """The default schedule, with halvings dropped so small patches survive.

    64 and up keeps the stock three stride-2 blocks; each halving of the
    patch below that converts one block to stride 1.
    """
    halvings = max(0, min(3, int(np.log2(max(patch_size, 1))) - 3))
    channels = (64, 128, 256, 512)
    return tuple((ch, 2 if j < halvings else 1) for j, ch in enumerate(channels))


@dataclass(frozen=True)
class DiscriminatorConfig:
    patch_size: int = 64
    channel_schedule: tuple[tuple[int, int], ...] = DEFAULT_SCHEDULE
    leaky_slope: float = 0.2
    use_histogram: bool = False
    hist_bins: int = N_BINS

    def __post_init__(self):
        if not self.channel_schedule:
            raise ConfigurationError("channel_schedule must be non-empty")
        for ch, stride in self.channel_schedule:
            if ch < 1 or stride not in (1, 2):
                raise ConfigurationError(f"bad schedule entry ({ch}, {stride})")
        h = self.patch_size
        for _, stride in self.channel_schedule:
            h = ops.conv2d_out_hw(h, h, 4, stride, 1)[0]
            if h < 1:
                raise ConfigurationError("schedule collapses the patch below 1 pixel")
        if ops.conv2d_out_hw(h, h, 4, 1, 1)[0] < 1:
            raise ConfigurationError("no room left for the output convolution")

    @property
    def in_channels(self) -> int:
        return 3 if self.use_histogram else 2

    @property
    def logits_hw(self) -> int:
        h = self.patch_size
        for _, stride in self.channel_schedule:
            h = ops.conv2d_out_hw(h, h, 4, stride, 1)[0]
        return ops.conv2d_out_hw(h, h, 4, 1, 1)[0]


def tensor_shapes(cfg: DiscriminatorConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    prev = cfg.in_channels
    for j, (ch, _) in enumerate(cfg.channel_schedule):
        shapes[f"blk{j}.w"] = (ch, prev, 4, 4)
        shapes[f"blk{j}.b"] = (ch,)
        if j > 0:
            shapes[f"blk{j}.gamma"] = (ch,)
            shapes[f"blk{j}.beta"] = (ch,)
        prev = ch
    shapes["out.w"] = (1, prev, 4, 4)
    shapes["out.b"] = (1,)
    if cfg.use_histogram:
        shapes["hist.w"] = (cfg.hist_bins, cfg.patch_size**2)
        shapes["hist.b"] = (cfg.patch_size**2,)
    return shapes


def stat_shapes(cfg: DiscriminatorConfig) -> dict[str, tuple[int, ...]]:
    return {
        f"blk{j}.{stat}": (ch,)
        for j, (ch, _) in enumerate(cfg.channel_schedule)
        if j > 0
        for stat in ("mean", "var")
    }


@dataclass
class DiscriminatorParams:
    config: DiscriminatorConfig
    tensors: dict[str, np.ndarray]
    stats: dict[str, np.ndarray] = field(default_factory=dict)


def discriminator_init(
    config: DiscriminatorConfig, seed: int, dtype=np.float32
) -> DiscriminatorParams:
    """Weights ~ N(0, 0.02); batch-norm scale 1 / shift 0; biases 0."""
    rng = np.random.default_rng(np.random.SeedSequence((_INIT_TAG, seed)))
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith(".w"):
            tensors[name] = (rng.standard_normal(shape) * 0.02).astype(dtype)
        elif name.endswith(".gamma"):
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    stats = {}
    for name, shape in stat_shapes(config).items():
        init = np.ones if name.endswith(".var") else np.zeros
        stats[name] = init(shape, dtype=dtype)
    return DiscriminatorParams(config, tensors, stats)


def forward_batch(
    params: DiscriminatorParams,
    masks: np.ndarray,
    images: np.ndarray,
    hists: np.ndarray | None = None,
    mode: str = "eval",
):
    """Logits map for a batch of (mask, image) pairs; returns (logits, cache)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.config
    p = cfg.patch_size
    if masks.shape != images.shape or masks.ndim != 4 or masks.shape[1:] != (1, p, p):
        raise ValueError(
            f"masks and images must both be (N, 1, {p}, {p}), got {masks.shape} / {images.shape}"
        )
    t, s = params.tensors, params.stats
    dtype = t["out.w"].dtype

    channels = [np.asarray(masks, dtype=dtype), np.asarray(images, dtype=dtype)]
    c_hist = None
    if cfg.use_histogram:
        if hists is None or hists.shape != (masks.shape[0], cfg.hist_bins):
            raise ValueError("use_histogram requires histograms of shape (N, bins)")
        hmap, c_hist = ops.dense_forward(np.asarray(hists, dtype=dtype), t["hist.w"], t["hist.b"])
        channels.append(hmap.reshape(-1, 1, p, p))
    h = np.concatenate(channels, axis=1)

    blocks = []
    for j, (_, stride) in enumerate(cfg.channel_schedule):
        h, c_conv = ops.conv2d_forward(h, t[f"blk{j}.w"], t[f"blk{j}.b"], stride=stride, pad=1)
        c_bn = None
        if j > 0:
            h, c_bn, m, v = ops.batchnorm2d_forward(
                h, t[f"blk{j}.gamma"], t[f"blk{j}.beta"],
                s[f"blk{j}.mean"], s[f"blk{j}.var"], mode,
            )
            if mode == "train":
                s[f"blk{j}.mean"], s[f"blk{j}.var"] = m, v
        h, c_act = ops.leaky_relu_forward(h, cfg.leaky_slope)
        blocks.append((c_conv, c_bn, c_act))
    logits, c_out = ops.conv2d_forward(h, t["out.w"], t["out.b"], stride=1, pad=1)
    return logits, {"blocks": blocks, "out": c_out, "hist": c_hist}


def backward_batch(params: DiscriminatorParams, cache: dict, dout: np.ndarray):
    """Returns (grads, d_mask, d_image) for a scalar loss with d(loss)/d(logits)."""
    cfg = params.config
    grads: dict[str, np.ndarray] = {}
    g, grads["out.w"], grads["out.b"] = ops.conv2d_backward(cache["out"], dout)
    for j in reversed(range(len(cfg.channel_schedule))):
        c_conv, c_bn, c_act = cache["blocks"][j]
        g = ops.leaky_relu_backward(c_act, g)
        if c_bn is not None:
            g, grads[f"blk{j}.gamma"], grads[f"blk{j}.beta"] = ops.batchnorm2d_backward(c_bn, g)
        g, grads[f"blk{j}.w"], grads[f"blk{j}.b"] = ops.conv2d_backward(c_conv, g)
    d_mask, d_image = g[:, 0:1], g[:, 1:2]
    if cfg.use_histogram:
        dmap = g[:, 2:3].reshape(g.shape[0], -1)
        _, grads["hist.w"], grads["hist.b"] = ops.dense_backward(cache["hist"], dmap)
    return grads, d_mask, d_image


def discriminator_forward(
    params: DiscriminatorParams, mask: np.ndarray, image: np.ndarray
) -> np.ndarray:
    """Single-sample eval forward; returns the 2D logits map."""
    logits, _ = forward_batch(params, mask[None, None], image[None, None])
    return logits[0, 0]


def shape_audit(config: DiscriminatorConfig) -> dict:
    """Shapes, parameter total, and the logits map size for a config."""
    shapes = tensor_shapes(config)
    total = sum(int(np.prod(s)) for s in shapes.values())
    return {"shapes": shapes, "total_params": total, "logits_hw": config.logits_hw}
