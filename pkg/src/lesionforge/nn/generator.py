"""Mask + density-histogram conditioned U-Net generator.

The network maps a binary lesion mask and a 100-bin density histogram to an
intensity patch in [-1, 1].  Encoder blocks are 4x4 stride-2 convolutions
(batch norm except the first, leaky activations); decoder blocks are nearest
neighbor 2x upsampling followed by a 3x3 convolution, with skip concatenation
from the mirror encoder block.  The histogram passes through its own dense
layer and is fused with a flattened summary of the final decoder features
through two dense layers; the fused map re-enters the image path as an extra
channel of the 3x3 output convolution (tanh).

Everything is plain numpy with explicit caches so the backward pass can be
hand-chained and audited against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..imaging import N_BINS, as_mask, validate_histogram
from . import ops

_INIT_TAG = 0x9E01
_DROPOUT_TAG = 0x9E02

# Decoder blocks receiving dropout in train mode (innermost first).
N_DROPOUT_BLOCKS = 3


def default_channel_schedule(depth: int, base: int) -> tuple[int, ...]:
    """base, 2*base, 4*base, ... capped at 8*base (64 -> 512)."""
    return tuple(min(base * 2**i, base * 8) for i in range(depth))


@dataclass(frozen=True)
class GeneratorConfig:
    patch_size: int = 64
    depth: int | None = None  # None -> log2(patch_size)
    base_channels: int = 64
    channel_schedule: tuple[int, ...] | None = None
    hist_bins: int = N_BINS
    hist_dense_units: int = N_BINS
    bridge_mode: str = "compressed"  # or "literal"
    bridge_units: int = 256
    dropout_rate: float = 0.5
    leaky_slope: float = 0.2

    def __post_init__(self):
        p = self.patch_size
        if p < 2 or p & (p - 1):
            raise ConfigurationError(f"patch_size must be a power of two, got {p}")
        max_depth = p.bit_length() - 1
        if self.depth is not None and not 1 <= self.depth <= max_depth:
            raise ConfigurationError(
                f"depth must be in [1, {max_depth}] for patch_size {p}, got {self.depth}"
            )
        if self.bridge_mode not in ("compressed", "literal"):
            raise ConfigurationError(f"unknown bridge_mode {self.bridge_mode!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in [0, 1)")
        if self.hist_bins < 1 or self.hist_dense_units < 1:
            raise ConfigurationError("histogram branch sizes must be positive")
        if self.channel_schedule is not None and len(self.channel_schedule) != self.resolved_depth:
            raise ConfigurationError("channel_schedule length must equal depth")

    @property
    def resolved_depth(self) -> int:
        return self.depth if self.depth is not None else self.patch_size.bit_length() - 1

    @property
    def channels(self) -> tuple[int, ...]:
        if self.channel_schedule is not None:
            return tuple(self.channel_schedule)
        return default_channel_schedule(self.resolved_depth, self.base_channels)


def _decoder_channels(cfg: GeneratorConfig) -> list[int]:
    """Output channels per decoder block: mirror the encoder, end at base."""
    ch = cfg.channels
    d = cfg.resolved_depth
    return [ch[d - 2 - j] if j <= d - 2 else cfg.base_channels for j in range(d)]


def tensor_shapes(cfg: GeneratorConfig) -> dict[str, tuple[int, ...]]:
    """Every trainable tensor, in creation order."""
    ch = cfg.channels
    d = cfg.resolved_depth
    dec_ch = _decoder_channels(cfg)
    shapes: dict[str, tuple[int, ...]] = {}
    for j in range(d):
        cin = 1 if j == 0 else ch[j - 1]
        shapes[f"enc{j}.w"] = (ch[j], cin, 4, 4)
        shapes[f"enc{j}.b"] = (ch[j],)
        if j > 0:
            shapes[f"enc{j}.gamma"] = (ch[j],)
            shapes[f"enc{j}.beta"] = (ch[j],)
    prev = ch[d - 1]
    for j in range(d):
        skip = ch[d - 2 - j] if j <= d - 2 else 0
        shapes[f"dec{j}.w"] = (dec_ch[j], prev + skip, 3, 3)
        shapes[f"dec{j}.b"] = (dec_ch[j],)
        shapes[f"dec{j}.gamma"] = (dec_ch[j],)
        shapes[f"dec{j}.beta"] = (dec_ch[j],)
        prev = dec_ch[j]
    shapes["hist.w"] = (cfg.hist_bins, cfg.hist_dense_units)
    shapes["hist.b"] = (cfg.hist_dense_units,)
    p2 = cfg.patch_size**2
    if cfg.bridge_mode == "compressed":
        shapes["reduce.w"] = (1, dec_ch[-1], 1, 1)
        shapes["reduce.b"] = (1,)
        flat = p2
    else:
        flat = dec_ch[-1] * p2
    shapes["bridge1.w"] = (flat, cfg.bridge_units)
    shapes["bridge1.b"] = (cfg.bridge_units,)
    shapes["bridge2.w"] = (cfg.bridge_units + cfg.hist_dense_units, p2)
    shapes["bridge2.b"] = (p2,)
    shapes["out.w"] = (1, dec_ch[-1] + 1, 3, 3)
    shapes["out.b"] = (1,)
    return shapes


def stat_shapes(cfg: GeneratorConfig) -> dict[str, tuple[int, ...]]:
    """Batch-norm running mean/var tensors (state, not trained)."""
    ch = cfg.channels
    d = cfg.resolved_depth
    dec_ch = _decoder_channels(cfg)
    shapes: dict[str, tuple[int, ...]] = {}
    for j in range(1, d):
        shapes[f"enc{j}.mean"] = (ch[j],)
        shapes[f"enc{j}.var"] = (ch[j],)
    for j in range(d):
        shapes[f"dec{j}.mean"] = (dec_ch[j],)
        shapes[f"dec{j}.var"] = (dec_ch[j],)
    return shapes


@dataclass
class GeneratorParams:
    config: GeneratorConfig
    tensors: dict[str, np.ndarray]
    stats: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class GeneratorInput:
    mask: np.ndarray
    histogram: np.ndarray

    def __post_init__(self):
        as_mask(self.mask)
        validate_histogram(self.histogram, n_bins=self.histogram.shape[0])


def generator_init(
    config: GeneratorConfig, seed: int, dtype=np.float32
) -> GeneratorParams:
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
    return GeneratorParams(config, tensors, stats)


def _check_inputs(cfg: GeneratorConfig, masks: np.ndarray, hists: np.ndarray) -> None:
    p = cfg.patch_size
    if masks.ndim != 4 or masks.shape[1:] != (1, p, p):
        raise ValueError(f"masks must be (N, 1, {p}, {p}), got {masks.shape}")
    if hists.ndim != 2 or hists.shape != (masks.shape[0], cfg.hist_bins):
        raise ValueError(
            f"histograms must be ({masks.shape[0]}, {cfg.hist_bins}), got {hists.shape}"
        )
    sums = hists.sum(axis=1)
    if np.any(hists < 0) or not np.allclose(sums, 1.0, atol=1e-5):
        raise ValueError("histograms must be non-negative and sum to 1")


def forward_batch(
    params: GeneratorParams,
    masks: np.ndarray,
    hists: np.ndarray,
    mode: str = "eval",
    dropout_seed: int | tuple[int, ...] = 0,
):
    """Run the network on a batch; returns (output (N,1,P,P) in [-1,1], cache).

    In train mode batch-norm running statistics in ``params.stats`` are
    updated in place and dropout is applied to the first N_DROPOUT_BLOCKS
    decoder blocks, seeded by ``dropout_seed``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.config
    _check_inputs(cfg, masks, hists)
    t, s = params.tensors, params.stats
    d = cfg.resolved_depth
    dtype = t["out.w"].dtype
    slope = cfg.leaky_slope

    h = np.ascontiguousarray(masks, dtype=dtype)
    enc_caches = []
    e_outs = []
    for j in range(d):
        h, c_conv = ops.conv2d_forward(h, t[f"enc{j}.w"], t[f"enc{j}.b"], stride=2, pad=1)
        c_bn = None
        if j > 0:
            h, c_bn, m, v = ops.batchnorm2d_forward(
                h, t[f"enc{j}.gamma"], t[f"enc{j}.beta"],
                s[f"enc{j}.mean"], s[f"enc{j}.var"], mode,
            )
            if mode == "train":
                s[f"enc{j}.mean"], s[f"enc{j}.var"] = m, v
        h, c_act = ops.leaky_relu_forward(h, slope)
        enc_caches.append((c_conv, c_bn, c_act))
        e_outs.append(h)

    entropy = dropout_seed if isinstance(dropout_seed, tuple) else (dropout_seed,)
    rng = np.random.default_rng(np.random.SeedSequence((_DROPOUT_TAG, *entropy)))
    dec_caches = []
    h = e_outs[-1]
    for j in range(d):
        h, c_up = ops.upsample2x_forward(h)
        skip_idx = d - 2 - j
        up_channels = h.shape[1]
        if skip_idx >= 0:
            h = np.concatenate([h, e_outs[skip_idx]], axis=1)
        h, c_conv = ops.conv2d_forward(h, t[f"dec{j}.w"], t[f"dec{j}.b"], stride=1, pad=1)
        h, c_bn, m, v = ops.batchnorm2d_forward(
            h, t[f"dec{j}.gamma"], t[f"dec{j}.beta"],
            s[f"dec{j}.mean"], s[f"dec{j}.var"], mode,
        )
        if mode == "train":
            s[f"dec{j}.mean"], s[f"dec{j}.var"] = m, v
        h, c_act = ops.leaky_relu_forward(h, slope)
        c_drop = None
        if mode == "train" and j < N_DROPOUT_BLOCKS and cfg.dropout_rate > 0:
            h, c_drop = ops.dropout_forward(h, cfg.dropout_rate, rng)
        dec_caches.append((c_up, skip_idx, up_channels, c_conv, c_bn, c_act, c_drop))
    dec_out = h

    hh, c_hd = ops.dense_forward(np.asarray(hists, dtype=dtype), t["hist.w"], t["hist.b"])
    hh, c_ha = ops.leaky_relu_forward(hh, slope)

    n = masks.shape[0]
    if cfg.bridge_mode == "compressed":
        red, c_red = ops.conv2d_forward(dec_out, t["reduce.w"], t["reduce.b"])
        flat = red.reshape(n, -1)
        flat_shape = red.shape
    else:
        c_red = None
        flat = dec_out.reshape(n, -1)
        flat_shape = dec_out.shape
    b1, c_b1 = ops.dense_forward(flat, t["bridge1.w"], t["bridge1.b"])
    b1, c_b1a = ops.leaky_relu_forward(b1, slope)
    fused = np.concatenate([b1, hh], axis=1)
    f2, c_b2 = ops.dense_forward(fused, t["bridge2.w"], t["bridge2.b"])
    f2, c_b2a = ops.leaky_relu_forward(f2, slope)
    fmap = f2.reshape(n, 1, cfg.patch_size, cfg.patch_size)

    cat = np.concatenate([dec_out, fmap], axis=1)
    y, c_out = ops.conv2d_forward(cat, t["out.w"], t["out.b"], stride=1, pad=1)
    out, c_tanh = ops.tanh_forward(y)

    cache = {
        "enc": enc_caches,
        "dec": dec_caches,
        "hist": (c_hd, c_ha),
        "bridge": (c_red, flat_shape, c_b1, c_b1a, c_b2, c_b2a),
        "out": (c_out, c_tanh),
        "dec_out_channels": dec_out.shape[1],
    }
    return out, cache


def backward_batch(params: GeneratorParams, cache: dict, dout: np.ndarray):
    """Gradients of a scalar loss given d(loss)/d(output).

    Returns (grads keyed like params.tensors, d_mask, d_hist).
    """
    cfg = params.config
    d = cfg.resolved_depth
    bu = cfg.bridge_units
    grads: dict[str, np.ndarray] = {}

    c_out, c_tanh = cache["out"]
    dy = ops.tanh_backward(c_tanh, dout)
    dcat, grads["out.w"], grads["out.b"] = ops.conv2d_backward(c_out, dy)
    nch = cache["dec_out_channels"]
    d_dec_out = dcat[:, :nch]
    d_fmap = dcat[:, nch:]

    c_red, flat_shape, c_b1, c_b1a, c_b2, c_b2a = cache["bridge"]
    n = d_fmap.shape[0]
    df2 = ops.leaky_relu_backward(c_b2a, d_fmap.reshape(n, -1))
    dfused, grads["bridge2.w"], grads["bridge2.b"] = ops.dense_backward(c_b2, df2)
    db1 = ops.leaky_relu_backward(c_b1a, dfused[:, :bu])
    dhh = dfused[:, bu:]
    dflat, grads["bridge1.w"], grads["bridge1.b"] = ops.dense_backward(c_b1, db1)
    if cfg.bridge_mode == "compressed":
        dred = dflat.reshape(flat_shape)
        dr, grads["reduce.w"], grads["reduce.b"] = ops.conv2d_backward(c_red, dred)
        d_dec_out = d_dec_out + dr
    else:
        d_dec_out = d_dec_out + dflat.reshape(flat_shape)

    c_hd, c_ha = cache["hist"]
    dhh = ops.leaky_relu_backward(c_ha, dhh)
    d_hist, grads["hist.w"], grads["hist.b"] = ops.dense_backward(c_hd, dhh)

    skip_grads: list[np.ndarray | None] = [None] * d
    g = d_dec_out
    for j in reversed(range(d)):
        c_up, skip_idx, up_channels, c_conv, c_bn, c_act, c_drop = cache["dec"][j]
        if c_drop is not None:
            g = ops.dropout_backward(c_drop, g)
        g = ops.leaky_relu_backward(c_act, g)
        g, grads[f"dec{j}.gamma"], grads[f"dec{j}.beta"] = ops.batchnorm2d_backward(c_bn, g)
        g, grads[f"dec{j}.w"], grads[f"dec{j}.b"] = ops.conv2d_backward(c_conv, g)
        if skip_idx >= 0:
            skip_grads[skip_idx] = g[:, up_channels:]
            g = g[:, :up_channels]
        g = ops.upsample2x_backward(c_up, g)
    skip_grads[d - 1] = g  # bottleneck feeds the first decoder block only

    g = None
    for j in reversed(range(d)):
        acc = skip_grads[j]
        if g is not None:
            acc = acc + g if acc is not None else g
        c_conv, c_bn, c_act = cache["enc"][j]
        acc = ops.leaky_relu_backward(c_act, acc)
        if c_bn is not None:
            acc, grads[f"enc{j}.gamma"], grads[f"enc{j}.beta"] = ops.batchnorm2d_backward(c_bn, acc)
        g, grads[f"enc{j}.w"], grads[f"enc{j}.b"] = ops.conv2d_backward(c_conv, acc)
    d_mask = g
    return grads, d_mask, d_hist


def generator_forward(
    params: GeneratorParams,
    gin: GeneratorInput,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> np.ndarray:
    """Single-sample forward; returns a (patch_size, patch_size) array in [-1, 1]."""
    cfg = params.config
    mask = as_mask(gin.mask)
    if mask.shape != (cfg.patch_size, cfg.patch_size):
        raise ValueError(f"mask must be {cfg.patch_size}x{cfg.patch_size}, got {mask.shape}")
    hist = validate_histogram(gin.histogram, n_bins=cfg.hist_bins)
    out, _ = forward_batch(
        params, mask[None, None], hist[None], mode=mode, dropout_seed=dropout_seed
    )
    return out[0, 0]


@dataclass(frozen=True)
class ShapeAudit:
    shapes: dict[str, tuple[int, ...]]
    total_params: int
    bridge_params: int
    warnings: tuple[str, ...]

    def lines(self) -> list[str]:
        rows = [f"{name:14s} {shape}" for name, shape in self.shapes.items()]
        rows.append(f"total trainable parameters: {self.total_params}")
        rows.extend(f"warning: {w}" for w in self.warnings)
        return rows


def shape_audit(config: GeneratorConfig, bridge_budget: int = 10_000_000) -> ShapeAudit:
    """Deterministic listing of every tensor shape plus parameter totals.

    Warns when literal bridge mode (flattening the full final decoder feature
    map into a dense layer) pushes the bridge parameter count past
    ``bridge_budget``; at paper scale this block dominates the network.
    """
    shapes = tensor_shapes(config)
    counts = {name: int(np.prod(shape)) for name, shape in shapes.items()}
    total = sum(counts.values())
    bridge = sum(c for name, c in counts.items() if name.startswith(("bridge", "reduce")))
    warnings = []
    if config.bridge_mode == "literal" and bridge > bridge_budget:
        warnings.append(
            f"literal bridge holds {bridge} of {total} parameters "
            f"({bridge / total:.0%}); the flattened decoder-to-dense layer is "
            f"the dominant block — consider bridge_mode='compressed'"
        )
    return ShapeAudit(shapes, total, bridge, tuple(warnings))
