"""HTTP facade over checkpoints, synthesis, and implant previews.

Read-only by design: every endpoint either lists store contents or runs a
pure computation on them.  Training and dataset builds stay on the CLI.
Images travel as 8-bit grayscale PNG by default; clients that need the
lossless float patch ask for ``application/x-lsf1`` via ``Accept``.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import lsf
from .data import SliceSample, load_slice_sample
from .errors import EmptyMaskError, PlacementError, TransformError
from .imaging import N_BINS, HuWindow, as_mask, compute_histogram, histogram_l1, uniform_histogram
from .implant import ImplantSpec, place_lesion
from .nn.checkpoint import checkpoint_digest
from .nn.generator import GeneratorParams
from .synthesis import HistogramPreset, SynthesisRequest, make_preset, synthesize, to_png_bytes
from .training import load_generator

LSF_MEDIA_TYPE = "application/x-lsf1"
HISTOGRAM_L1_HEADER = "X-Histogram-L1"
HISTOGRAM_SUM_TOL = 1e-4


class ApiError(Exception):
    """Maps to an HTTP error response with a ``{code, message}`` body."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ResourceStore:
    """Immutable view of the directories the service exposes.

    Checkpoints are subdirectories (each with a ``manifest.json``) of
    ``checkpoint_dir``; shape-pool masks are ``*.lsf`` files under
    ``shapes_dir``; healthy slices (optional, for implant previews) are
    slice-sample directories under ``slices_dir``.  Loaded generators are
    cached per checkpoint id; directories are treated as frozen for the
    lifetime of the process.
    """

    checkpoint_dir: Path
    shapes_dir: Path
    slices_dir: Path | None = None
    _generators: dict[str, GeneratorParams] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def checkpoint_ids(self) -> list[str]:
        if not self.checkpoint_dir.is_dir():
            return []
        return sorted(p.name for p in self.checkpoint_dir.iterdir() if (p / "manifest.json").is_file())

    def checkpoint_path(self, checkpoint_id: str) -> Path:
        path = self.checkpoint_dir / checkpoint_id
        if checkpoint_id not in self.checkpoint_ids():
            raise ApiError(404, "unknown_checkpoint", f"no checkpoint {checkpoint_id!r} in the store")
        return path

    def generator(self, checkpoint_id: str) -> GeneratorParams:
        path = self.checkpoint_path(checkpoint_id)
        with self._lock:
            if checkpoint_id not in self._generators:
                self._generators[checkpoint_id] = load_generator(path)
            return self._generators[checkpoint_id]

    def mask_ids(self) -> list[str]:
        if not self.shapes_dir.is_dir():
            return []
        return sorted(p.stem for p in self.shapes_dir.glob("*.lsf"))

    def load_mask(self, mask_id: str) -> np.ndarray:
        path = self.shapes_dir / f"{mask_id}.lsf"
        if "/" in mask_id or not path.is_file():
            raise ApiError(404, "unknown_mask", f"no mask {mask_id!r} in the shape pool")
        return as_mask(lsf.read_lsf(path).astype(np.uint8))

    def slice_ids(self) -> list[str]:
        if self.slices_dir is None or not self.slices_dir.is_dir():
            return []
        return sorted(p.name for p in self.slices_dir.iterdir() if (p / "slice.lsf").is_file())

    def load_slice(self, slice_id: str) -> SliceSample:
        if self.slices_dir is None or "/" in slice_id or not (self.slices_dir / slice_id / "slice.lsf").is_file():
            raise ApiError(404, "unknown_slice", f"no healthy slice {slice_id!r} configured")
        return load_slice_sample(self.slices_dir / slice_id)


def parse_histogram(raw) -> np.ndarray:
    """Validate an API histogram: length 100, non-negative, sum 1 +/- 1e-4.

    Sums inside the tolerance are renormalized; anything else is a 400.
    """
    if not isinstance(raw, (list, tuple)):
        raise ApiError(400, "bad_histogram_type", "histogram must be an array of numbers")
    if len(raw) != 100:
        raise ApiError(400, "bad_histogram_length", f"histogram must have 100 bins, got {len(raw)}")
    try:
        hist = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ApiError(400, "bad_histogram_value", "histogram bins must be numbers")
    if hist.ndim != 1 or not np.all(np.isfinite(hist)):
        raise ApiError(400, "bad_histogram_value", "histogram bins must be finite numbers")
    if np.any(hist < 0):
        raise ApiError(400, "bad_histogram_negative", "histogram bins must be non-negative")
    total = float(hist.sum())
    if abs(total - 1.0) > HISTOGRAM_SUM_TOL:
        raise ApiError(400, "bad_histogram_sum", f"histogram must sum to 1 within {HISTOGRAM_SUM_TOL:g}, got {total:.6g}")
    return hist / total


def decode_mask_png(data_b64: str) -> np.ndarray:
    from PIL import Image

    try:
        raw = base64.b64decode(data_b64, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            arr = np.asarray(img.convert("L"))
    except (binascii.Error, OSError, ValueError):
        raise ApiError(400, "bad_mask", "mask_png is not a decodable base64 PNG")
    return (arr > 127).astype(np.uint8)


def _require(body: dict, key: str) -> object:
    if key not in body:
        raise ApiError(400, "missing_field", f"request body needs {key!r}")
    return body[key]


def _resolve_mask(store: ResourceStore, body: dict, patch_size: int) -> np.ndarray:
    if "mask_id" in body and body["mask_id"] is not None:
        mask = store.load_mask(str(body["mask_id"]))
    elif "mask_png" in body and body["mask_png"] is not None:
        mask = decode_mask_png(str(body["mask_png"]))
    else:
        raise ApiError(400, "missing_field", "request body needs 'mask_id' or 'mask_png'")
    if mask.shape != (patch_size, patch_size):
        raise ApiError(400, "bad_mask", f"mask is {mask.shape[0]}x{mask.shape[1]}, checkpoint wants {patch_size}x{patch_size}")
    return mask


def _checkpoint_entry(store: ResourceStore, checkpoint_id: str) -> dict:
    path = store.checkpoint_dir / checkpoint_id
    manifest = lsf.read_meta(path / "manifest.json")
    gen_cfg = manifest.get("gen_config", {})
    train_cfg = manifest.get("train_config", {})
    return {
        "id": checkpoint_id,
        "step": int(manifest.get("step", 0)),
        "digest": checkpoint_digest(path),
        "config": {
            "patch_size": gen_cfg.get("patch_size"),
            "hist_bins": gen_cfg.get("hist_bins"),
            "bridge_mode": gen_cfg.get("bridge_mode"),
            "mode": train_cfg.get("mode"),
        },
    }


def _synthesize_unit(store: ResourceStore, body: dict) -> tuple[np.ndarray, np.ndarray, float]:
    """Shared synthesis path: returns (unit patch, mask, round-trip L1)."""
    params = store.generator(str(_require(body, "checkpoint_id")))
    mask = _resolve_mask(store, body, params.config.patch_size)
    hist = parse_histogram(_require(body, "histogram"))
    unit, mask = synthesize(SynthesisRequest(mask=mask, histogram=hist), params=params)
    try:
        round_trip = histogram_l1(compute_histogram(unit, mask), hist)
    except EmptyMaskError:
        round_trip = float("nan")
    return unit, mask, round_trip


def _parse_implant_spec(raw) -> ImplantSpec:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ApiError(400, "bad_spec", "spec must be an object")
    try:
        return ImplantSpec(
            rotation=float(raw.get("rotation", 0.0)),
            scale=float(raw.get("scale", 1.0)),
            seed=int(raw.get("seed", 0)),
            feather_sigma=float(raw.get("feather_sigma", 2.0)),
            max_retries=int(raw.get("max_retries", 50)),
        )
    except (TypeError, ValueError) as exc:
        raise ApiError(400, "bad_spec", f"invalid implant spec: {exc}")


def create_app(
    checkpoint_dir: str | Path,
    shapes_dir: str | Path,
    slices_dir: str | Path | None = None,
) -> FastAPI:
    store = ResourceStore(
        checkpoint_dir=Path(checkpoint_dir),
        shapes_dir=Path(shapes_dir),
        slices_dir=Path(slices_dir) if slices_dir is not None else None,
    )
    app = FastAPI(title="lesionforge", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/checkpoints")
    async def checkpoints():
        return [_checkpoint_entry(store, cid) for cid in store.checkpoint_ids()]

    @app.get("/masks")
    async def masks():
        out = []
        for mid in store.mask_ids():
            mask = store.load_mask(mid)
            out.append(
                {
                    "id": mid,
                    "height": int(mask.shape[0]),
                    "width": int(mask.shape[1]),
                    "thumbnail": f"/masks/{mid}/thumbnail.png",
                }
            )
        return out

    @app.get("/masks/{mask_id}/thumbnail.png")
    async def mask_thumbnail(mask_id: str):
        mask = store.load_mask(mask_id)
        return Response(content=to_png_bytes(mask.astype(np.float32)), media_type="image/png")

    @app.get("/slices")
    async def slices():
        return [{"id": sid} for sid in store.slice_ids()]

    @app.post("/presets")
    async def presets(request: Request):
        body = await _json_body(request)
        kind = str(_require(body, "kind"))
        if kind == "uniform":
            return {"kind": kind, "bins": uniform_histogram(N_BINS).tolist()}
        means = body.get("means")
        widths = body.get("widths")
        weights = body.get("weights")
        if not isinstance(means, (list, tuple)) or not isinstance(widths, (list, tuple)):
            raise ApiError(400, "bad_spec", "preset needs 'means' and 'widths' lists")
        try:
            hist = make_preset(
                HistogramPreset(
                    kind,
                    tuple(float(m) for m in means),
                    tuple(float(w) for w in widths),
                    tuple(float(a) for a in weights) if weights is not None else None,
                )
            )
        except (TypeError, ValueError) as exc:
            raise ApiError(400, "bad_spec", str(exc))
        return {"kind": kind, "bins": hist.tolist()}

    @app.post("/synthesize")
    async def synthesize_endpoint(request: Request):
        body = await _json_body(request)
        unit, _mask, round_trip = _synthesize_unit(store, body)
        headers = {HISTOGRAM_L1_HEADER: f"{round_trip:.6g}"}
        if LSF_MEDIA_TYPE in request.headers.get("accept", ""):
            return Response(content=lsf.array_to_bytes(unit), media_type=LSF_MEDIA_TYPE, headers=headers)
        return Response(content=to_png_bytes(unit), media_type="image/png", headers=headers)

    @app.post("/implant/preview")
    async def implant_preview(request: Request):
        body = await _json_body(request)
        sample = store.load_slice(str(_require(body, "slice_id")))
        unit, mask, round_trip = _synthesize_unit(store, body)
        spec = _parse_implant_spec(body.get("spec"))
        window = HuWindow(*sample.meta.get("window", (0.0, 1.0)))
        lesion = (window.lo + unit * (window.hi - window.lo)).astype(np.float32)
        try:
            result = place_lesion(sample.slice, sample.liver_mask, lesion, mask, spec)
        except (PlacementError, TransformError) as exc:
            tries = getattr(exc, "tries", 0)
            raise ApiError(409, "placement_infeasible", f"{exc} (tries={tries})")
        view = np.clip((result.slice.pixels - window.lo) / (window.hi - window.lo), 0.0, 1.0)
        return {
            "slice_png": base64.b64encode(to_png_bytes(view)).decode("ascii"),
            "mask_png": base64.b64encode(to_png_bytes(result.lesion_mask.astype(np.float32))).decode("ascii"),
            "position": [int(result.position[0]), int(result.position[1])],
            "histogram_l1": None if np.isnan(round_trip) else round_trip,
        }

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise ApiError(400, "bad_json", "request body is not valid JSON")
    if not isinstance(body, dict):
        raise ApiError(400, "bad_json", "request body must be a JSON object")
    return body
