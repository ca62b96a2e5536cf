"""Slice normalization and lesion decomposition into (mask, histogram) pairs.

A segmented lesion is split into the two conditioning signals the generator
consumes: a binary shape mask and a 100-bin histogram of the window-normalized
intensities inside that mask.  Histograms are mass-normalized (sum 1) so the
density signal is independent of lesion area.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError

N_BINS = 100
DEFAULT_WINDOW = (-100.0, 400.0)

PROVENANCES = ("real", "phantom", "synthetic")


@dataclass(frozen=True)
class HuWindow:
    """Linear intensity window; ``lo`` maps to 0 and ``hi`` to 1."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"degenerate window: lo={self.lo} must be < hi={self.hi}")


@dataclass
class Slice:
    """A single 2D slice with pixel spacing and provenance.

    ``pixels`` are Hounsfield units for real data and normalized units in
    [0, 1] for phantoms and synthetic slices.
    """

    pixels: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)
    provenance: str = "real"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("slice pixels must be a non-empty 2D grid")
        if not (self.spacing[0] > 0 and self.spacing[1] > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass
class LesionSample:
    """Normalized intensity patch paired with its binary mask.

    ``rescaled`` records whether the lesion had to be shrunk to fit the patch.
    """

    patch: np.ndarray
    mask: np.ndarray
    rescaled: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.patch = np.asarray(self.patch, dtype=np.float32)
        self.mask = as_mask(self.mask)
        if self.patch.shape != self.mask.shape:
            raise ValueError("patch and mask shapes differ")
        if self.mask.sum() == 0:
            raise EmptyMaskError("lesion sample mask has no foreground")
        if self.patch.min() < 0.0 or self.patch.max() > 1.0:
            raise ValueError("patch values must lie in [0, 1]")


def as_mask(mask: np.ndarray) -> np.ndarray:
    """Validate and return a strictly binary uint8 mask."""
    m = np.asarray(mask)
    vals = np.unique(m)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"mask must be binary, found values {vals[:5]}")
    return m.astype(np.uint8)


def normalize_hu(slc: Slice, window: HuWindow) -> np.ndarray:
    """Map pixel intensities through ``window`` into [0, 1], clipping outside."""
    span = window.hi - window.lo
    out = (slc.pixels.astype(np.float64) - window.lo) / span
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def compute_histogram(patch: np.ndarray, mask: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Histogram of masked patch values over ``n_bins`` uniform bins on [0, 1].

    Bin i covers [i/n, (i+1)/n); the last bin is closed above so a value of
    exactly 1.0 lands in bin n-1.  The result is normalized to sum 1.
    """
    patch = np.asarray(patch)
    m = as_mask(mask)
    if patch.shape != m.shape:
        raise ValueError(f"shape mismatch: patch {patch.shape} vs mask {m.shape}")
    values = patch[m.astype(bool)]
    if values.size == 0:
        raise EmptyMaskError("cannot compute a histogram over an empty mask")
    idx = np.minimum((values.astype(np.float64) * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.float64)
    return counts / counts.sum()


def uniform_histogram(n_bins: int = N_BINS) -> np.ndarray:
    """The flat histogram; stands in for 'no density information'."""
    return np.full(n_bins, 1.0 / n_bins)


def validate_histogram(hist: np.ndarray, n_bins: int = N_BINS, tol: float = 1e-6) -> np.ndarray:
    """Check DensityHistogram invariants; returns the histogram as float64."""
    h = np.asarray(hist, dtype=np.float64)
    if h.shape != (n_bins,):
        raise ValueError(f"histogram must have shape ({n_bins},), got {h.shape}")
    if np.any(h < 0):
        raise ValueError("histogram bins must be non-negative")
    if abs(h.sum() - 1.0) > tol:
        raise ValueError(f"histogram must sum to 1 (got {h.sum():.8f})")
    return h


def histogram_l1(a: np.ndarray, b: np.ndarray, n_bins: int = N_BINS) -> float:
    """Total absolute difference between two histograms; ranges over [0, 2]."""
    ha = validate_histogram(a, n_bins)
    hb = validate_histogram(b, n_bins)
    return float(np.abs(ha - hb).sum())


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(rmin, rmax, cmin, cmax) inclusive bounding box of the foreground."""
    m = np.asarray(mask)
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground")
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def extract_lesion_sample(
    slc: Slice,
    lesion_mask: np.ndarray,
    patch_size: int = 128,
    window: HuWindow | None = None,
) -> LesionSample:
    """Cut a normalized patch centered on the lesion's bounding-box centroid.

    The crop is integer-aligned so mask foreground is preserved pixel for
    pixel.  Lesions whose bounding box exceeds the patch are isotropically
    downscaled until the box fits 90% of the patch, and flagged ``rescaled``.
    Regions of the crop window falling outside the slice are zero-padded.
    """
    window = window or HuWindow(*DEFAULT_WINDOW)
    m = as_mask(lesion_mask)
    if m.shape != slc.shape:
        raise ValueError(f"mask shape {m.shape} does not match slice {slc.shape}")
    if m.sum() == 0:
        raise EmptyMaskError("cannot extract a sample from an empty lesion mask")

    norm = normalize_hu(slc, window)
    rmin, rmax, cmin, cmax = mask_bbox(m)
    bh, bw = rmax - rmin + 1, cmax - cmin + 1

    rescaled = False
    if max(bh, bw) > patch_size:
        # Shrink the whole slice so the lesion bbox occupies 90% of the patch.
        factor = 0.9 * patch_size / max(bh, bw)
        norm = ndimage.zoom(norm, factor, order=1, mode="nearest", prefilter=False)
        norm = np.clip(norm, 0.0, 1.0)
        m = (ndimage.zoom(m.astype(np.float32), factor, order=0, mode="nearest", prefilter=False) > 0.5).astype(np.uint8)
        if m.sum() == 0:
            raise EmptyMaskError("lesion vanished while downscaling to patch size")
        rmin, rmax, cmin, cmax = mask_bbox(m)
        rescaled = True

    center_r = (rmin + rmax) // 2
    center_c = (cmin + cmax) // 2
    top = center_r - patch_size // 2
    left = center_c - patch_size // 2

    patch = np.zeros((patch_size, patch_size), dtype=np.float32)
    mask_out = np.zeros((patch_size, patch_size), dtype=np.uint8)
    src_r0, src_r1 = max(top, 0), min(top + patch_size, norm.shape[0])
    src_c0, src_c1 = max(left, 0), min(left + patch_size, norm.shape[1])
    dst_r0, dst_c0 = src_r0 - top, src_c0 - left
    patch[dst_r0 : dst_r0 + (src_r1 - src_r0), dst_c0 : dst_c0 + (src_c1 - src_c0)] = norm[src_r0:src_r1, src_c0:src_c1]
    mask_out[dst_r0 : dst_r0 + (src_r1 - src_r0), dst_c0 : dst_c0 + (src_c1 - src_c0)] = m[src_r0:src_r1, src_c0:src_c1]

    return LesionSample(patch=patch, mask=mask_out, rescaled=rescaled)
