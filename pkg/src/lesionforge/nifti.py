"""NIfTI-1 ingestion: convert real CT volumes into the LSF slice-dataset layout.

Conversion-only adapter — everything downstream consumes LSF.  Reads
single-file ``.nii`` / ``.nii.gz`` volumes (magic ``n+1``), applies the
header's slope/intercept scaling, and extracts axial slices.  ``convert_case``
pairs an image volume with its label volume (liver/lesion labels) and writes
one sample directory per liver-bearing slice.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import save_slice_sample
from .imaging import DEFAULT_WINDOW, Slice

HEADER_SIZE = 348

# NIfTI-1 datatype codes for the voxel types that occur in CT practice.
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}

_HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("_skip0", "V36"),
        ("dim", "<i2", 8),
        ("_skip1", "V14"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("_skip2", "V2"),
        ("pixdim", "<f4", 8),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("_skip3", "V224"),
        ("magic", "S4"),
    ]
)
assert _HEADER_DTYPE.itemsize == HEADER_SIZE


@dataclass(frozen=True)
class NiftiVolume:
    """Axial stack of a NIfTI volume: ``data[k]`` is slice k, rows=y, cols=x."""

    data: np.ndarray  # (slices, rows, cols) float32
    voxel_spacing: tuple[float, float, float]  # (slice_mm, row_mm, col_mm)

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]


def read_nifti(path: str | os.PathLike) -> NiftiVolume:
    """Read a single-file NIfTI-1 volume (optionally gzipped)."""
    p = Path(path)
    opener = gzip.open if p.name.endswith(".gz") else open
    with opener(p, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{p}: truncated NIfTI header ({len(raw)} bytes)")
    header = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE)[0]
    swapped = False
    if int(header["sizeof_hdr"]) != HEADER_SIZE:
        header = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE.newbyteorder())[0]
        swapped = True
        if int(header["sizeof_hdr"]) != HEADER_SIZE:
            raise ValueError(f"{p}: not a NIfTI-1 file (sizeof_hdr)")
    magic = bytes(header["magic"])  # numpy strips the trailing NUL
    if magic != b"n+1":
        raise ValueError(f"{p}: unsupported NIfTI magic {magic!r} (need single-file n+1)")
    ndim = int(header["dim"][0])
    if not 2 <= ndim <= 4:
        raise ValueError(f"{p}: unsupported dimensionality {ndim}")
    nx, ny = int(header["dim"][1]), int(header["dim"][2])
    nz = int(header["dim"][3]) if ndim >= 3 else 1
    if ndim == 4 and int(header["dim"][4]) != 1:
        raise ValueError(f"{p}: 4D volume with {int(header['dim'][4])} frames")
    code = int(header["datatype"])
    if code not in _DTYPES:
        raise ValueError(f"{p}: unsupported datatype code {code}")
    dtype = np.dtype(_DTYPES[code])
    if swapped:
        dtype = dtype.newbyteorder()
    offset = int(header["vox_offset"])
    count = nx * ny * nz
    payload = raw[offset : offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise ValueError(f"{p}: truncated payload")
    # On disk x varies fastest; (nz, ny, nx) C-order puts axial slices first.
    data = np.frombuffer(payload, dtype=dtype, count=count).reshape(nz, ny, nx)
    data = data.astype(np.float32)
    slope, inter = float(header["scl_slope"]), float(header["scl_inter"])
    if slope != 0.0 and np.isfinite(slope) and (slope, inter) != (1.0, 0.0):
        data = data * slope + inter
    pixdim = header["pixdim"]
    spacing = (float(pixdim[3]) or 1.0, float(pixdim[2]) or 1.0, float(pixdim[1]) or 1.0)
    return NiftiVolume(data=np.ascontiguousarray(data), voxel_spacing=spacing)


def axial_slices(volume: NiftiVolume, provenance: str = "real") -> list[Slice]:
    """Unstack a volume into 2D slices with (row_mm, col_mm) spacing."""
    spacing = volume.voxel_spacing[1:]
    return [Slice(pixels=volume.data[k], spacing=spacing, provenance=provenance) for k in range(volume.n_slices)]


def convert_case(
    image_path: str | os.PathLike,
    label_path: str | os.PathLike,
    out_dir: str | os.PathLike,
    liver_label: int = 1,
    lesion_label: int = 2,
    window: tuple[float, float] = DEFAULT_WINDOW,
    min_liver_pixels: int = 64,
) -> dict:
    """Write one slice-sample directory per liver-bearing axial slice.

    The liver mask is the union of liver and lesion labels; each connected
    lesion component becomes its own ``lesion_mask_<k>``.  Returns summary
    counts (slices written, slices with lesions).
    """
    image = read_nifti(image_path)
    labels = read_nifti(label_path)
    if image.data.shape != labels.data.shape:
        raise ValueError(
            f"image/label shape mismatch: {image.data.shape} vs {labels.data.shape}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lab = np.rint(labels.data).astype(np.int32)
    n_written = 0
    n_with_lesions = 0
    for k, slc in enumerate(axial_slices(image)):
        liver = (lab[k] == liver_label) | (lab[k] == lesion_label)
        if liver.sum() < min_liver_pixels:
            continue
        components, n_comp = ndimage.label(lab[k] == lesion_label)
        lesions = [(components == i).astype(np.uint8) for i in range(1, n_comp + 1)]
        save_slice_sample(
            out / f"sample_{n_written:05d}",
            slc,
            liver.astype(np.uint8),
            lesions,
            extra_meta={"source_slice": k},
            window=window,
        )
        n_written += 1
        n_with_lesions += bool(lesions)
    return {"slices": n_written, "with_lesions": n_with_lesions}
