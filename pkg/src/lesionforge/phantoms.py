"""Procedural liver phantoms: deterministic slices for desk-scale training.

Each phantom is an elliptical "liver" of smooth mid-intensity texture on a
darker background, with 0..k blob-shaped lesions whose pixel values are drawn
from recorded target histograms.  Everything derives from a single seed, so
identical (seed, config) pairs yield bit-identical phantoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import PhantomGenerationError
from .imaging import N_BINS, Slice, compute_histogram

_SEED_TAG = 0x1E51  # namespace tag so phantom streams never collide with training streams


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry and appearance ranges for procedural phantoms.

    Lesion target histograms are unimodal or bimodal Gaussian bumps over the
    100 normalized-intensity bins; ``hist_center_bands`` keeps lesion density
    away from the parenchyma band so lesions remain visible.
    """

    size: int = 128
    liver_semi_axes: tuple[float, float] = (0.28, 0.40)  # fractions of size, (min, max)
    n_lesions: tuple[int, int] = (1, 3)
    lesion_radius: tuple[float, float] = (5.0, 13.0)
    lesion_irregularity: float = 0.22
    hist_center_bands: tuple[tuple[float, float], ...] = ((12.0, 40.0), (62.0, 90.0))
    hist_width: tuple[float, float] = (0.8, 3.0)
    bimodal_prob: float = 0.25
    background_level: float = 0.12
    parenchyma_level: float = 0.52
    texture_amplitude: float = 0.035
    texture_sigma: float = 3.0
    margin: int = 2
    max_tries: int = 200


def config_for_size(size: int) -> PhantomConfig:
    """Defaults with the absolute pixel ranges rescaled from the 128 baseline."""
    s = size / 128.0
    return PhantomConfig(size=size, lesion_radius=(5.0 * s, 13.0 * s))


_PROBE_TAG = 0x1E52


def probe_pairs(
    seed: int,
    patch_size: int = 64,
    hist_centers: tuple[tuple[float, ...], ...] = ((20.0, 28.0, 70.0, 78.0), (24.0, 32.0, 74.0, 82.0)),
    hist_width: float = 4.0,
    radius_range: tuple[float, float] = (0.22, 0.28),
    config: PhantomConfig | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask/histogram/patch triplets with shared masks and swept densities.

    One blob mask per row of ``hist_centers``, rendered once per center onto
    one shared parenchyma context — so the same shape appears under several
    densities and density conditioning is identifiable from the data (a set
    of unique mask/histogram pairs is not: the mask alone would determine
    the density).  The context is drawn once per mask rather than per
    rendering for the same reason: with fresh background noise per pair, the
    backgrounds would differ between pairs that share a mask, and the only
    input that could explain that difference is the histogram — the sweep
    would no longer isolate the density response.  Histograms are recomputed
    from the rendered pixels, as in the decomposition pipeline.  Default
    centers sit well clear of the parenchyma level so a global threshold can
    see every lesion, and default radii keep the boundary ring a small
    fraction of the mask.  Returns ``(masks, hists, patches)`` stacked along
    axis 0.
    """
    config = config or PhantomConfig()
    rng = np.random.default_rng(np.random.SeedSequence((_PROBE_TAG, int(seed))))
    p = patch_size
    bins = np.arange(N_BINS, dtype=np.float64)
    masks, hists, patches = [], [], []
    for centers in hist_centers:
        blob = _blob_mask(rng, p, (p // 2, p // 2), rng.uniform(*radius_range) * p, config.lesion_irregularity)
        fg = blob.astype(bool)
        context = np.clip(
            config.parenchyma_level
            + _smooth_noise(rng, p, config.texture_sigma, config.texture_amplitude),
            0.0,
            1.0,
        )
        for center in centers:
            hist = np.exp(-0.5 * ((bins - center) / hist_width) ** 2)
            hist /= hist.sum()
            patch = context.copy()
            patch[fg] = render_lesion_pixels(rng, int(fg.sum()), hist)
            patch = patch.astype(np.float32)
            masks.append(blob)
            hists.append(compute_histogram(patch, blob))
            patches.append(patch)
    return np.stack(masks), np.stack(hists), np.stack(patches)


@dataclass
class PhantomSample:
    slice: Slice
    liver_mask: np.ndarray
    lesion_masks: list[np.ndarray] = field(default_factory=list)
    target_histograms: list[np.ndarray] = field(default_factory=list)


def _smooth_noise(rng: np.random.Generator, size: int, sigma: float, amplitude: float) -> np.ndarray:
    noise = rng.standard_normal((size, size))
    smooth = ndimage.gaussian_filter(noise, sigma)
    std = smooth.std()
    if std > 0:
        smooth *= amplitude / std
    return smooth


def _ellipse_mask(size: int, center: tuple[float, float], axes: tuple[float, float], theta: float) -> np.ndarray:
    rr, cc = np.mgrid[:size, :size].astype(np.float64)
    dr, dc = rr - center[0], cc - center[1]
    ct, st = np.cos(theta), np.sin(theta)
    u = ct * dr + st * dc
    v = -st * dr + ct * dc
    return ((u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0).astype(np.uint8)


def _blob_mask(rng: np.random.Generator, size: int, center: tuple[int, int], radius: float, irregularity: float) -> np.ndarray:
    """Star-convex blob: radius modulated by a few random angular harmonics."""
    n_harm = 4
    amps = rng.uniform(0.0, irregularity, size=n_harm) / np.arange(1, n_harm + 1)
    phases = rng.uniform(0.0, 2 * np.pi, size=n_harm)
    rr, cc = np.mgrid[:size, :size].astype(np.float64)
    dr, dc = rr - center[0], cc - center[1]
    ang = np.arctan2(dc, dr)
    mod = np.ones_like(ang)
    for k in range(n_harm):
        mod += amps[k] * np.cos((k + 2) * ang + phases[k])
    dist = np.hypot(dr, dc)
    return (dist <= radius * mod).astype(np.uint8)


def sample_lesion_histogram(rng: np.random.Generator, config: PhantomConfig) -> np.ndarray:
    """Draw a target density histogram (unimodal or bimodal Gaussian bumps)."""
    bins = np.arange(N_BINS, dtype=np.float64)

    def bump() -> np.ndarray:
        band = config.hist_center_bands[rng.integers(len(config.hist_center_bands))]
        center = rng.uniform(*band)
        width = rng.uniform(*config.hist_width)
        h = np.exp(-0.5 * ((bins - center) / max(width, 1e-6)) ** 2)
        return h / h.sum()

    hist = bump()
    if rng.random() < config.bimodal_prob:
        w = rng.uniform(0.3, 0.7)
        hist = w * hist + (1.0 - w) * bump()
    return hist / hist.sum()


def render_lesion_pixels(rng: np.random.Generator, n_pixels: int, hist: np.ndarray) -> np.ndarray:
    """Sample normalized intensities whose empirical histogram follows ``hist``.

    Bin occupancies are allocated by largest-remainder quota so the rendered
    histogram matches the target up to 1/n rounding; values are uniform within
    their bin and shuffled spatially.
    """
    quota = hist * n_pixels
    counts = np.floor(quota).astype(np.int64)
    short = n_pixels - int(counts.sum())
    if short > 0:
        frac = quota - counts
        # Stable tie-break on bin index keeps the allocation deterministic.
        order = np.lexsort((np.arange(N_BINS), -frac))
        counts[order[:short]] += 1
    bin_idx = np.repeat(np.arange(N_BINS), counts)
    values = (bin_idx + rng.random(n_pixels)) / N_BINS
    return rng.permutation(values)


def generate_phantom(seed: int, config: PhantomConfig | None = None) -> PhantomSample:
    """Build one phantom slice; a pure function of (seed, config)."""
    config = config or PhantomConfig()
    rng = np.random.default_rng(np.random.SeedSequence((_SEED_TAG, int(seed))))
    size = config.size

    # Liver ellipse, jittered around the canvas center.
    center = (
        size / 2 + rng.uniform(-0.04, 0.04) * size,
        size / 2 + rng.uniform(-0.04, 0.04) * size,
    )
    lo, hi = config.liver_semi_axes
    axes = (size * rng.uniform(lo, hi), size * rng.uniform(lo, hi))
    theta = rng.uniform(0.0, np.pi)
    liver = _ellipse_mask(size, center, axes, theta)

    pixels = np.full((size, size), config.background_level, dtype=np.float64)
    pixels += _smooth_noise(rng, size, config.texture_sigma, config.texture_amplitude * 0.5)
    parenchyma = config.parenchyma_level + _smooth_noise(rng, size, config.texture_sigma, config.texture_amplitude)
    pixels[liver.astype(bool)] = parenchyma[liver.astype(bool)]

    interior = ndimage.binary_erosion(liver, iterations=config.margin) if config.margin > 0 else liver.astype(bool)
    interior_coords = np.argwhere(interior)

    n_lo, n_hi = config.n_lesions
    n_lesions = int(rng.integers(n_lo, n_hi + 1))
    occupied = np.zeros((size, size), dtype=bool)
    lesion_masks: list[np.ndarray] = []
    histograms: list[np.ndarray] = []

    for _ in range(n_lesions):
        placed = False
        for _ in range(config.max_tries):
            if interior_coords.size == 0:
                break
            radius = rng.uniform(*config.lesion_radius)
            cr, cc = interior_coords[rng.integers(len(interior_coords))]
            blob = _blob_mask(rng, size, (int(cr), int(cc)), radius, config.lesion_irregularity)
            blob_b = blob.astype(bool)
            if not blob_b.any():
                continue
            if np.any(blob_b & ~interior) or np.any(blob_b & occupied):
                continue
            hist = sample_lesion_histogram(rng, config)
            values = render_lesion_pixels(rng, int(blob_b.sum()), hist)
            pixels[blob_b] = values
            occupied |= ndimage.binary_dilation(blob_b, iterations=2)
            lesion_masks.append(blob)
            histograms.append(hist)
            placed = True
            break
        if not placed:
            raise PhantomGenerationError(
                f"seed {seed}: could not place a lesion (radius range {config.lesion_radius}) "
                f"inside the liver after {config.max_tries} tries"
            )

    slc = Slice(pixels=np.clip(pixels, 0.0, 1.0), spacing=(1.0, 1.0), provenance="phantom")
    return PhantomSample(slice=slc, liver_mask=liver, lesion_masks=lesion_masks, target_histograms=histograms)


def healthy_config(config: PhantomConfig | None = None) -> PhantomConfig:
    """Variant of ``config`` that produces lesion-free phantoms."""
    from dataclasses import replace

    return replace(config or PhantomConfig(), n_lesions=(0, 0))
