"""Checkpoint directories: a JSON manifest plus one LSF1 file per tensor.

Layout::

    <dir>/manifest.json
    <dir>/<namespace>/<group>/<tensor>.lsf

with namespaces like ``gen``/``disc`` and groups ``param``, ``stat``,
``adam_m``, ``adam_v``.  Tensors are stored float32; the digest is the
sha256 of every file in sorted relative order, so identical training runs
produce identical digests.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import lsf
from ..errors import CheckpointNotFoundError

FORMAT_VERSION = 1

Bundle = dict[str, dict[str, dict[str, np.ndarray]]]


def save_checkpoint(path: str | Path, manifest: dict, networks: Bundle) -> str:
    """Write manifest + tensors; returns the checkpoint digest."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest, format_version=FORMAT_VERSION)
    lsf.write_meta(root / "manifest.json", manifest)
    for ns, groups in networks.items():
        for group, tensors in groups.items():
            gdir = root / ns / group
            gdir.mkdir(parents=True, exist_ok=True)
            for name, tensor in tensors.items():
                lsf.write_lsf(gdir / f"{name}.lsf", tensor)
    return checkpoint_digest(root)


def load_checkpoint(path: str | Path) -> tuple[dict, Bundle]:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise CheckpointNotFoundError(f"no checkpoint manifest at {mpath}")
    manifest = lsf.read_meta(mpath)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointNotFoundError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}"
        )
    networks: Bundle = {}
    for ns_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        groups = {}
        for gdir in sorted(p for p in ns_dir.iterdir() if p.is_dir()):
            groups[gdir.name] = {
                f.name[: -len(".lsf")]: lsf.read_lsf(f)
                for f in sorted(gdir.glob("*.lsf"))
            }
        networks[ns_dir.name] = groups
    return manifest, networks


def checkpoint_digest(path: str | Path) -> str:
    return lsf.dataset_digest(path)


def validate_shapes(
    tensors: dict[str, np.ndarray], expected: dict[str, tuple[int, ...]], label: str
) -> None:
    """Every expected tensor present with the right shape, nothing extra."""
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise ValueError(f"{label}: missing tensors {missing}, unexpected {extra}")
    for name, shape in expected.items():
        got = tuple(tensors[name].shape)
        if got != tuple(shape):
            raise ValueError(f"{label}: tensor {name} has shape {got}, expected {tuple(shape)}")
