"""Implant synthesized lesions into healthy liver slices.

A lesion patch is rotated and scaled about its mask centroid, placed at a
uniformly drawn liver-interior position so the whole mask fits inside the
liver, and alpha-blended with a Gaussian-feathered edge.  The stored ground
truth is the unsmoothed binary mask; feathering affects intensities only, and
pixels beyond the 4-sigma feather band keep their original values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import lsf
from .data import SliceSample, save_slice_sample
from .errors import DatasetBuildError, EmptyMaskError, PlacementError, TransformError
from .imaging import DEFAULT_WINDOW, Slice, as_mask, mask_bbox, uniform_histogram
from .nn.checkpoint import checkpoint_digest
from .synthesis import SynthesisRequest, synthesize
from .training import MODE_MASK_DENSITY, MODE_MASK_ONLY, load_generator

_PLACE_TAG = 0x4A01
_BUILD_TAG = 0x4A02


@dataclass(frozen=True)
class ImplantSpec:
    rotation: float = 0.0  # degrees, [0, 360)
    scale: float = 1.0
    seed: int = 0
    feather_sigma: float = 2.0
    max_retries: int = 50

    def __post_init__(self):
        if not 0.0 <= self.rotation < 360.0:
            raise ValueError("rotation must lie in [0, 360)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.feather_sigma < 0:
            raise ValueError("feather_sigma must be >= 0")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


@dataclass(frozen=True)
class ImplantResult:
    slice: Slice
    lesion_mask: np.ndarray
    applied: ImplantSpec
    position: tuple[int, int]  # resolved center (row, col)


def transform_lesion(
    patch: np.ndarray, mask: np.ndarray, rotation: float, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate/scale about the mask centroid: bilinear patch, nearest mask."""
    m = as_mask(mask)
    if m.sum() == 0:
        raise EmptyMaskError("cannot transform an empty lesion mask")
    patch = np.asarray(patch, dtype=np.float32)
    if patch.shape != m.shape:
        raise ValueError(f"patch {patch.shape} and mask {m.shape} differ")

    rmin, rmax, cmin, cmax = mask_bbox(m)
    center = np.array([(rmin + rmax) / 2.0, (cmin + cmax) / 2.0])
    theta = np.deg2rad(rotation)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])

    # Forward-map the bbox corners; they must stay on the canvas.
    h, w = m.shape
    corners = np.array([[rmin, cmin], [rmin, cmax], [rmax, cmin], [rmax, cmax]], dtype=float)
    fwd = (scale * (rot @ (corners - center).T)).T + center
    if fwd.min() < 0 or fwd[:, 0].max() > h - 1 or fwd[:, 1].max() > w - 1:
        raise TransformError(
            f"lesion at rotation {rotation:.1f}, scale {scale:.2f} exceeds the canvas"
        )

    # ndimage applies output -> input coordinates: inverse of the above.
    inv = rot.T / scale
    offset = center - inv @ center
    out_patch = ndimage.affine_transform(patch, inv, offset=offset, order=1, mode="constant", cval=0.0)
    out_mask = ndimage.affine_transform(m, inv, offset=offset, order=0, mode="constant", cval=0)
    return out_patch.astype(np.float32), out_mask.astype(np.uint8)


def blend(
    slc: Slice, lesion_hu: np.ndarray, lesion_mask: np.ndarray, feather_sigma: float
) -> Slice:
    """Alpha-composite with alpha = Gaussian-smoothed mask (clipped to [0,1])."""
    m = as_mask(lesion_mask)
    if lesion_hu.shape != slc.shape or m.shape != slc.shape:
        raise ValueError("lesion canvas and mask must match the slice shape")
    if feather_sigma == 0:
        alpha = m.astype(np.float64)
    else:
        alpha = np.clip(ndimage.gaussian_filter(m.astype(np.float64), feather_sigma), 0.0, 1.0)
    out = alpha * np.asarray(lesion_hu, dtype=np.float64) + (1.0 - alpha) * slc.pixels.astype(np.float64)
    return replace(slc, pixels=out.astype(np.float32), provenance="synthetic")


def place_lesion(
    slc: Slice,
    liver_mask: np.ndarray,
    lesion_patch: np.ndarray,
    lesion_mask: np.ndarray,
    spec: ImplantSpec,
) -> ImplantResult:
    """Uniformly sample liver positions until the lesion fits; then blend."""
    liver = as_mask(liver_mask)
    if liver.shape != slc.shape:
        raise ValueError("liver mask must match the slice shape")
    liver_rows, liver_cols = np.nonzero(liver)
    if liver_rows.size == 0:
        raise EmptyMaskError("liver mask is empty")

    patch_t, mask_t = transform_lesion(lesion_patch, lesion_mask, spec.rotation, spec.scale)
    if mask_t.sum() == 0:
        raise TransformError("lesion mask vanished under the requested transform")
    rmin, rmax, cmin, cmax = mask_bbox(mask_t)
    crop_mask = mask_t[rmin : rmax + 1, cmin : cmax + 1]
    crop_patch = patch_t[rmin : rmax + 1, cmin : cmax + 1]
    bh, bw = crop_mask.shape
    fg = crop_mask.astype(bool)

    h, w = slc.shape
    rng = np.random.default_rng(np.random.SeedSequence((_PLACE_TAG, spec.seed)))
    for _ in range(spec.max_retries):
        k = rng.integers(liver_rows.size)
        cr, cc = int(liver_rows[k]), int(liver_cols[k])
        top, left = cr - bh // 2, cc - bw // 2
        if top < 0 or left < 0 or top + bh > h or left + bw > w:
            continue
        region = liver[top : top + bh, left : left + bw]
        if np.all(region[fg]):
            full_mask = np.zeros((h, w), dtype=np.uint8)
            full_mask[top : top + bh, left : left + bw][fg] = 1
            canvas = np.zeros((h, w), dtype=np.float32)
            canvas[top : top + bh, left : left + bw][fg] = crop_patch[fg]
            out = blend(slc, canvas, full_mask, spec.feather_sigma)
            return ImplantResult(out, full_mask, spec, (cr, cc))
    raise PlacementError(
        f"no feasible placement for a {bh}x{bw} lesion", tries=spec.max_retries
    )


def build_synthetic_dataset(
    healthy: list[SliceSample],
    shape_pool: list[np.ndarray],
    histogram_pool: list[np.ndarray],
    checkpoint: str | Path,
    n_samples: int,
    mode: str,
    seed: int,
    out_dir: str | Path,
    scale_range: tuple[float, float] = (0.7, 1.3),
    feather_sigma: float = 2.0,
    encoding: str = "normalized",
    max_redraws: int = 20,
) -> dict:
    """Synthesize, implant, and store ``n_samples`` labeled slices.

    Each sample draws a healthy slice, a shape, and (in mask_plus_density
    mode) a histogram; mask_only mode feeds the uniform histogram, matching
    the ablation's training-time conditioning.  Failed placements redraw the
    whole sample with a fresh sub-seed and are counted in the manifest.
    """
    if mode not in (MODE_MASK_ONLY, MODE_MASK_DENSITY):
        raise ValueError(f"mode must be {MODE_MASK_ONLY} or {MODE_MASK_DENSITY}")
    if not healthy or not shape_pool or not histogram_pool:
        raise ValueError("healthy slices, shape pool, and histogram pool must be non-empty")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    params = load_generator(checkpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for i in range(n_samples):
        for attempt in range(max_redraws):
            rng = np.random.default_rng(np.random.SeedSequence((_BUILD_TAG, seed, i, attempt)))
            sample = healthy[rng.integers(len(healthy))]
            shape = shape_pool[rng.integers(len(shape_pool))]
            if mode == MODE_MASK_DENSITY:
                hist = histogram_pool[rng.integers(len(histogram_pool))]
            else:
                hist = uniform_histogram(params.config.hist_bins)
            patch, mask = synthesize(
                SynthesisRequest(shape, hist, encoding=encoding), params=params
            )
            spec = ImplantSpec(
                rotation=float(rng.uniform(0.0, 360.0)) % 360.0,
                scale=float(rng.uniform(*scale_range)),
                seed=int(rng.integers(2**31)),
                feather_sigma=feather_sigma,
            )
            try:
                result = place_lesion(sample.slice, sample.liver_mask, patch, mask, spec)
            except (PlacementError, TransformError):
                failures += 1
                continue
            save_slice_sample(
                out / f"sample_{i:05d}",
                result.slice,
                sample.liver_mask,
                [result.lesion_mask],
                extra_meta={
                    "mode": mode,
                    "rotation": result.applied.rotation,
                    "scale": result.applied.scale,
                    "position": list(result.position),
                },
                window=tuple(sample.meta.get("window", DEFAULT_WINDOW)),
            )
            break
        else:
            raise DatasetBuildError(
                f"sample {i}: no feasible implant after {max_redraws} redraws "
                f"({failures} failed placements total)"
            )
    manifest = {
        "kind": "synthetic_dataset",
        "mode": mode,
        "seed": seed,
        "n_samples": n_samples,
        "encoding": encoding,
        "checkpoint_digest": checkpoint_digest(checkpoint),
        "placement_failures": failures,
    }
    lsf.write_meta(out / "manifest.json", manifest)
    return manifest
