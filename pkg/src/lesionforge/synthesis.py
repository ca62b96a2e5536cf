"""Inference-time control surface: synthesize lesions from (mask, histogram).

Histogram presets discretize Gaussian mixtures over the 100 bins, so density
can be dialed by hand (single band, two bands, or a delta spike); the control
grid tiles synthesize outputs with histograms along rows and shapes along
columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import DEFAULT_WINDOW, HuWindow, N_BINS, as_mask, validate_histogram
from .nn.generator import GeneratorInput, GeneratorParams, generator_forward
from .training import load_generator

ENCODINGS = ("normalized", "windowed_hu")


@dataclass(frozen=True)
class SynthesisRequest:
    mask: np.ndarray
    histogram: np.ndarray
    checkpoint: str | Path | None = None
    encoding: str = "normalized"
    window: HuWindow | None = None

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}, got {self.encoding!r}")


@dataclass(frozen=True)
class HistogramPreset:
    kind: str  # unimodal | bimodal | delta
    means: tuple[float, ...]
    widths: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    _ARITY = {"delta": 1, "unimodal": 1, "bimodal": 2}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown preset kind {self.kind!r}")
        k = self._ARITY[self.kind]
        if len(self.means) != k or len(self.widths) != k:
            raise ValueError(f"{self.kind} preset takes {k} mean(s) and width(s)")
        if self.weights is not None and (
            len(self.weights) != k or any(w <= 0 for w in self.weights)
        ):
            raise ValueError("weights must be positive, one per mode")


def make_preset(preset: HistogramPreset, n_bins: int = N_BINS) -> np.ndarray:
    """Discretized Gaussian mixture over the bins, normalized to sum 1."""
    for m in preset.means:
        if not 0 <= m <= n_bins - 1:
            raise ValueError(f"mean bin {m} outside [0, {n_bins - 1}]")
    for w in preset.widths:
        if w < 0:
            raise ValueError("widths must be >= 0")
    weights = preset.weights or (1.0,) * len(preset.means)
    hist = np.zeros(n_bins)
    bins = np.arange(n_bins, dtype=np.float64)
    for mean, width, weight in zip(preset.means, preset.widths, weights):
        if width == 0:
            mode = np.zeros(n_bins)
            mode[round(mean)] = 1.0
        else:
            mode = np.exp(-0.5 * ((bins - mean) / width) ** 2)
            mode /= mode.sum()
        hist += weight * mode
    return hist / hist.sum()


def delta_histogram(bin_index: int, n_bins: int = N_BINS) -> np.ndarray:
    return make_preset(HistogramPreset("delta", (bin_index,), (0,)), n_bins)


def synthesize(
    request: SynthesisRequest, params: GeneratorParams | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward; returns (patch in the requested encoding, mask).

    Deterministic: identical requests against identical checkpoint bytes
    yield identical outputs.
    """
    if params is None:
        if request.checkpoint is None:
            raise ValueError("request needs a checkpoint path or explicit params")
        params = load_generator(request.checkpoint)
    mask = as_mask(request.mask)
    hist = validate_histogram(request.histogram, params.config.hist_bins)
    out = generator_forward(params, GeneratorInput(mask, hist), mode="eval")
    unit = (out.astype(np.float32) + 1.0) / 2.0
    if request.encoding == "windowed_hu":
        window = request.window or HuWindow(*DEFAULT_WINDOW)
        return (window.lo + unit * (window.hi - window.lo)).astype(np.float32), mask
    return unit, mask


def render_grid(
    masks: list[np.ndarray],
    histograms: list[np.ndarray],
    checkpoint: str | Path | None = None,
    params: GeneratorParams | None = None,
    separator: float = 1.0,
) -> np.ndarray:
    """Rows = histograms, columns = masks, 1-pixel separators, values in [0, 1]."""
    if not masks or not histograms:
        raise ValueError("render_grid needs at least one mask and one histogram")
    if params is None:
        if checkpoint is None:
            raise ValueError("render_grid needs a checkpoint path or explicit params")
        params = load_generator(checkpoint)
    p = params.config.patch_size
    rows, cols = len(histograms), len(masks)
    grid = np.full((rows * p + rows - 1, cols * p + cols - 1), separator, dtype=np.float32)
    for r, hist in enumerate(histograms):
        for c, mask in enumerate(masks):
            tile, _ = synthesize(SynthesisRequest(mask, hist), params=params)
            grid[r * (p + 1) : r * (p + 1) + p, c * (p + 1) : c * (p + 1) + p] = tile
    return grid


def to_png_bytes(image: np.ndarray) -> bytes:
    """8-bit grayscale PNG of a [0, 1] image (round-half-up)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    quantized = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    import io

    buf = io.BytesIO()
    Image.fromarray(quantized, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(image))
