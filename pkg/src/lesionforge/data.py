"""On-disk datasets: slice samples, decomposed lesion pairs, and loaders.

Slice datasets hold one directory per sample (``slice.lsf``, ``liver_mask.lsf``,
``lesion_mask_<k>.lsf``, ``meta``).  Pair datasets hold the generator's
training triplets (``patch.lsf``, ``mask.lsf``, ``hist.lsf``, ``meta``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lsf
from .errors import EmptyMaskError
from .imaging import (
    DEFAULT_WINDOW,
    N_BINS,
    HuWindow,
    Slice,
    as_mask,
    compute_histogram,
    extract_lesion_sample,
    validate_histogram,
)
from .phantoms import PhantomConfig, generate_phantom


def save_slice_sample(
    sample_dir: str | os.PathLike,
    slc: Slice,
    liver_mask: np.ndarray,
    lesion_masks: list[np.ndarray] | None = None,
    extra_meta: dict | None = None,
    window: tuple[float, float] = DEFAULT_WINDOW,
) -> None:
    d = Path(sample_dir)
    d.mkdir(parents=True, exist_ok=True)
    lsf.write_lsf(d / "slice.lsf", slc.pixels)
    lsf.write_lsf(d / "liver_mask.lsf", as_mask(liver_mask).astype(np.float32))
    for k, m in enumerate(lesion_masks or []):
        lsf.write_lsf(d / f"lesion_mask_{k}.lsf", as_mask(m).astype(np.float32))
    meta = {
        "provenance": slc.provenance,
        "spacing": list(slc.spacing),
        "window": list(window),
        "n_lesions": len(lesion_masks or []),
    }
    meta.update(extra_meta or {})
    lsf.write_meta(d / "meta", meta)


@dataclass
class SliceSample:
    slice: Slice
    liver_mask: np.ndarray
    lesion_masks: list[np.ndarray] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    path: Path | None = None


def load_slice_sample(sample_dir: str | os.PathLike) -> SliceSample:
    d = Path(sample_dir)
    meta = lsf.read_meta(d / "meta")
    slc = Slice(
        pixels=lsf.read_lsf(d / "slice.lsf"),
        spacing=tuple(meta.get("spacing", (1.0, 1.0))),
        provenance=meta.get("provenance", "real"),
    )
    liver = as_mask(lsf.read_lsf(d / "liver_mask.lsf").astype(np.uint8))
    lesions = []
    for k in range(int(meta.get("n_lesions", 0))):
        lesions.append(as_mask(lsf.read_lsf(d / f"lesion_mask_{k}.lsf").astype(np.uint8)))
    return SliceSample(slice=slc, liver_mask=liver, lesion_masks=lesions, meta=meta, path=d)


def load_slice_dataset(dataset_dir: str | os.PathLike) -> list[SliceSample]:
    return [load_slice_sample(p) for p in lsf.sample_dirs(dataset_dir)]


def build_phantom_dataset(
    out_dir: str | os.PathLike,
    n_samples: int,
    seed: int,
    config: PhantomConfig | None = None,
) -> list[Path]:
    """Write ``n_samples`` phantoms (seeds ``seed..seed+n-1``) as a slice dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_samples):
        sample = generate_phantom(seed + i, config)
        d = out / f"sample_{i:05d}"
        save_slice_sample(
            d,
            sample.slice,
            sample.liver_mask,
            sample.lesion_masks,
            extra_meta={"phantom_seed": seed + i},
            window=(0.0, 1.0),
        )
        for k, hist in enumerate(sample.target_histograms):
            lsf.write_lsf(d / f"target_hist_{k}.lsf", hist.astype(np.float32))
        paths.append(d)
    return paths


def save_pair_sample(
    sample_dir: str | os.PathLike,
    patch: np.ndarray,
    mask: np.ndarray,
    hist: np.ndarray,
    meta: dict | None = None,
) -> None:
    d = Path(sample_dir)
    d.mkdir(parents=True, exist_ok=True)
    lsf.write_lsf(d / "patch.lsf", patch)
    lsf.write_lsf(d / "mask.lsf", as_mask(mask).astype(np.float32))
    lsf.write_lsf(d / "hist.lsf", np.asarray(hist, dtype=np.float32))
    lsf.write_meta(d / "meta", meta or {})


@dataclass
class PairDataset:
    """In-memory training triplets for the generator."""

    masks: np.ndarray  # (N, P, P) uint8
    hists: np.ndarray  # (N, n_bins) float64
    patches: np.ndarray  # (N, P, P) float32 in [0, 1]

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def patch_size(self) -> int:
        return self.masks.shape[1]


def load_pair_dataset(dataset_dir: str | os.PathLike, n_bins: int = N_BINS) -> PairDataset:
    dirs = lsf.sample_dirs(dataset_dir)
    if not dirs:
        raise ValueError(f"no samples under {dataset_dir}")
    masks, hists, patches = [], [], []
    for d in dirs:
        patches.append(lsf.read_lsf(d / "patch.lsf"))
        masks.append(as_mask(lsf.read_lsf(d / "mask.lsf").astype(np.uint8)))
        hists.append(validate_histogram(lsf.read_lsf(d / "hist.lsf"), n_bins))
    return PairDataset(
        masks=np.stack(masks),
        hists=np.stack(hists),
        patches=np.stack(patches).astype(np.float32),
    )


def prepare_pairs(
    slice_dataset_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    patch_size: int = 64,
    window: HuWindow | None = None,
) -> dict:
    """Decompose every segmented lesion of a slice dataset into training pairs.

    Returns summary counts (samples written, lesions skipped as empty).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_written = 0
    n_skipped = 0
    for sample in load_slice_dataset(slice_dataset_dir):
        win = window or HuWindow(*sample.meta.get("window", DEFAULT_WINDOW))
        for k, lesion in enumerate(sample.lesion_masks):
            try:
                ls = extract_lesion_sample(sample.slice, lesion, patch_size, win)
            except EmptyMaskError:
                n_skipped += 1
                continue
            hist = compute_histogram(ls.patch, ls.mask)
            save_pair_sample(
                out / f"sample_{n_written:05d}",
                ls.patch,
                ls.mask,
                hist,
                meta={
                    "source": sample.path.name,
                    "lesion_index": k,
                    "rescaled": ls.rescaled,
                    "window": [win.lo, win.hi],
                },
            )
            n_written += 1
    return {"samples": n_written, "skipped": n_skipped}
