"""LSF1 tensor files and the on-disk dataset layout.

LSF1 is a bit-exact little-endian float32 container: 4 magic bytes ``LSF1``,
a u32 header length, a UTF-8 JSON header ``{"dtype":"f32","shape":[...]}``,
then the row-major payload.  Slices, masks (as 0/1 floats) and patches all
travel in this format.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

MAGIC = b"LSF1"


def array_to_bytes(array: np.ndarray) -> bytes:
    """Serialize ``array`` as LSF1 bytes (cast to float32)."""
    arr = np.asarray(array, dtype="<f4")
    header = ('{"dtype":"f32","shape":[' + ",".join(str(int(s)) for s in arr.shape) + "]}").encode("utf-8")
    return MAGIC + len(header).to_bytes(4, "little") + header + arr.tobytes(order="C")


def array_from_bytes(data: bytes, label: str = "<bytes>") -> np.ndarray:
    """Parse LSF1 bytes back into a float32 array."""
    if data[:4] != MAGIC:
        raise ValueError(f"{label}: not an LSF1 file (magic {data[:4]!r})")
    hlen = int.from_bytes(data[4:8], "little")
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    if header.get("dtype") != "f32":
        raise ValueError(f"{label}: unsupported dtype {header.get('dtype')!r}")
    shape = tuple(int(s) for s in header["shape"])
    count = int(np.prod(shape)) if shape else 1
    payload = data[8 + hlen : 8 + hlen + count * 4]
    if len(payload) != count * 4:
        raise ValueError(f"{label}: truncated payload")
    return np.frombuffer(payload, dtype="<f4", count=count).reshape(shape).copy()


def write_lsf(path: str | os.PathLike, array: np.ndarray) -> None:
    """Write ``array`` to ``path`` as LSF1 (cast to float32)."""
    with open(path, "wb") as f:
        f.write(array_to_bytes(array))


def read_lsf(path: str | os.PathLike) -> np.ndarray:
    """Read an LSF1 file back into a float32 array."""
    with open(path, "rb") as f:
        return array_from_bytes(f.read(), label=str(path))


def write_meta(path: str | os.PathLike, meta: dict) -> None:
    """Write a ``meta`` text record (JSON, sorted keys, trailing newline)."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
        f.write("\n")


def read_meta(path: str | os.PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def sample_dirs(dataset_dir: str | os.PathLike) -> list[Path]:
    """Sample subdirectories of a dataset, in sorted (deterministic) order."""
    root = Path(dataset_dir)
    return sorted(p for p in root.iterdir() if p.is_dir())


def dataset_digest(dataset_dir: str | os.PathLike) -> str:
    """SHA-256 over every file in the tree, keyed by relative path.

    Two datasets with identical contents produce identical digests regardless
    of creation time.
    """
    root = Path(dataset_dir)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode("utf-8"))
        h.update(b"\x00")
        h.update(path.read_bytes())
        h.update(b"\x01")
    return h.hexdigest()
