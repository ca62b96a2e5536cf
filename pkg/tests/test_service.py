import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from lesionforge import lsf
from lesionforge.synthesis import HistogramPreset, delta_histogram, make_preset
from lesionforge.service import (
    HISTOGRAM_L1_HEADER,
    HISTOGRAM_SUM_TOL,
    LSF_MEDIA_TYPE,
    ApiError,
    create_app,
    parse_histogram,
)


@pytest.fixture(scope="module")
def client(tiny_store):
    app = create_app(tiny_store / "checkpoints", tiny_store / "shapes", tiny_store / "healthy")
    return TestClient(app)


def _hist(peak=80):
    h = [0.0] * 100
    h[peak] = 1.0
    return h


def _body(**kw):
    base = {"checkpoint_id": "final", "mask_id": "mask_0", "histogram": _hist()}
    base.update(kw)
    return base


def test_health(client):
    assert client.get("/health").json() == {"status": "ok"}


def test_checkpoint_listing(client, tiny_store):
    entries = client.get("/checkpoints").json()
    assert [e["id"] for e in entries] == ["final"]
    entry = entries[0]
    assert entry["digest"] and entry["step"] == 0
    assert entry["config"]["patch_size"] == 16
    # digest is a pure function of the store
    again = client.get("/checkpoints").json()[0]
    assert again["digest"] == entry["digest"]


def test_empty_store_lists_nothing(tmp_path):
    app = create_app(tmp_path / "none", tmp_path / "none")
    c = TestClient(app)
    assert c.get("/checkpoints").json() == []
    assert c.get("/masks").json() == []
    assert c.get("/slices").json() == []


def test_mask_listing_and_thumbnails(client):
    masks = client.get("/masks").json()
    assert [m["id"] for m in masks] == ["mask_0", "mask_1", "mask_2"]
    for m in masks:
        r = client.get(m["thumbnail"])
        assert r.status_code == 200
        img = Image.open(io.BytesIO(r.content))
        assert img.size == (m["width"], m["height"])


def test_synthesize_png_deterministic(client):
    r1 = client.post("/synthesize", json=_body())
    r2 = client.post("/synthesize", json=_body())
    assert r1.status_code == 200
    assert r1.headers["content-type"] == "image/png"
    assert r1.content == r2.content
    assert float(r1.headers[HISTOGRAM_L1_HEADER]) >= 0.0
    img = Image.open(io.BytesIO(r1.content))
    assert img.size == (16, 16)


def test_synthesize_lsf_accept_switch(client):
    r = client.post("/synthesize", json=_body(), headers={"Accept": LSF_MEDIA_TYPE})
    assert r.headers["content-type"] == LSF_MEDIA_TYPE
    arr = lsf.array_from_bytes(r.content)
    assert arr.shape == (16, 16)
    assert arr.dtype == np.float32
    assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


def test_synthesize_inline_mask_png(client):
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[5:11, 5:11] = 255
    buf = io.BytesIO()
    Image.fromarray(mask, mode="L").save(buf, format="PNG")
    body = {"checkpoint_id": "final", "mask_png": base64.b64encode(buf.getvalue()).decode(), "histogram": _hist()}
    r = client.post("/synthesize", json=body)
    assert r.status_code == 200


def test_synthesize_errors(client):
    assert client.post("/synthesize", json=_body(checkpoint_id="nope")).status_code == 404
    assert client.post("/synthesize", json=_body(checkpoint_id="nope")).json()["code"] == "unknown_checkpoint"
    assert client.post("/synthesize", json=_body(mask_id="nope")).json()["code"] == "unknown_mask"
    r = client.post("/synthesize", json=_body(histogram=[0.01] * 99))
    assert r.status_code == 400 and r.json()["code"] == "bad_histogram_length"
    r = client.post("/synthesize", json=_body(histogram=[-0.01, 1.01] + [0.0] * 98))
    assert r.status_code == 400 and r.json()["code"] == "bad_histogram_negative"
    r = client.post("/synthesize", json=_body(histogram=[0.02] * 100))
    assert r.status_code == 400 and r.json()["code"] == "bad_histogram_sum"
    r = client.post("/synthesize", json={"checkpoint_id": "final", "histogram": _hist()})
    assert r.status_code == 400 and r.json()["code"] == "missing_field"
    r = client.post("/synthesize", json=_body(mask_png="not@base64!", mask_id=None))
    assert r.status_code == 400 and r.json()["code"] == "bad_mask"
    r = client.post("/synthesize", content=b"{{{", headers={"content-type": "application/json"})
    assert r.status_code == 400 and r.json()["code"] == "bad_json"


def test_mask_checkpoint_size_mismatch(client):
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[2:6, 2:6] = 255
    buf = io.BytesIO()
    Image.fromarray(mask, mode="L").save(buf, format="PNG")
    body = {"checkpoint_id": "final", "mask_png": base64.b64encode(buf.getvalue()).decode(), "histogram": _hist()}
    r = client.post("/synthesize", json=body)
    assert r.status_code == 400 and r.json()["code"] == "bad_mask"


@given(eps=st.floats(min_value=-5e-5, max_value=5e-5, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_histogram_sums_inside_tolerance_accepted(eps):
    h = [(1.0 + eps) / 100.0] * 100
    out = parse_histogram(h)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


@given(eps=st.floats(min_value=2.1e-4, max_value=0.5, allow_nan=False), sign=st.sampled_from([-1.0, 1.0]))
@settings(max_examples=25, deadline=None)
def test_histogram_sums_beyond_tolerance_rejected(eps, sign):
    h = [(1.0 + sign * eps) / 100.0] * 100
    with pytest.raises(ApiError) as err:
        parse_histogram(h)
    assert err.value.code == "bad_histogram_sum"
    assert err.value.status == 400


def test_histogram_tolerance_constant():
    assert HISTOGRAM_SUM_TOL == 1e-4


def test_implant_preview_deterministic(client):
    body = _body(slice_id="sample_00000", spec={"rotation": 15.0, "scale": 1.0, "seed": 4})
    r1 = client.post("/implant/preview", json=body)
    assert r1.status_code == 200, r1.text
    r2 = client.post("/implant/preview", json=body)
    assert r1.content == r2.content
    j = r1.json()
    slice_img = np.asarray(Image.open(io.BytesIO(base64.b64decode(j["slice_png"]))))
    mask_img = np.asarray(Image.open(io.BytesIO(base64.b64decode(j["mask_png"]))))
    assert slice_img.shape == mask_img.shape == (64, 64)
    assert len(j["position"]) == 2


def test_implant_preview_mask_inside_liver(client, tiny_store):
    from lesionforge.data import load_slice_sample

    body = _body(slice_id="sample_00001", spec={"seed": 7})
    j = client.post("/implant/preview", json=body).json()
    mask_img = np.asarray(Image.open(io.BytesIO(base64.b64decode(j["mask_png"])))) > 127
    liver = load_slice_sample(tiny_store / "healthy" / "sample_00001").liver_mask.astype(bool)
    assert np.all(liver[mask_img])


def test_implant_preview_infeasible_scale(client):
    body = _body(slice_id="sample_00000", spec={"scale": 30.0, "seed": 1})
    r = client.post("/implant/preview", json=body)
    assert r.status_code == 409
    j = r.json()
    assert j["code"] == "placement_infeasible"
    assert "tries=" in j["message"]


def test_implant_preview_unknown_slice(client):
    r = client.post("/implant/preview", json=_body(slice_id="nope", spec={}))
    assert r.status_code == 404 and r.json()["code"] == "unknown_slice"


def test_preview_unconfigured_slices(tiny_store):
    app = create_app(tiny_store / "checkpoints", tiny_store / "shapes")  # no slices dir
    c = TestClient(app)
    r = c.post("/implant/preview", json=_body(slice_id="sample_00000", spec={}))
    assert r.status_code == 404


def test_presets_parity_and_validation(client):
    r = client.post("/presets", json={"kind": "delta", "means": [80], "widths": [0]})
    assert r.status_code == 200
    bins = r.json()["bins"]
    assert np.array_equal(np.asarray(bins), delta_histogram(80))

    r = client.post("/presets", json={"kind": "unimodal", "means": [30], "widths": [4]})
    expected = make_preset(HistogramPreset("unimodal", (30,), (4,)))
    assert np.allclose(r.json()["bins"], expected, atol=0, rtol=0)

    r = client.post(
        "/presets",
        json={"kind": "bimodal", "means": [20, 70], "widths": [3, 3], "weights": [4, 1]},
    )
    assert abs(sum(r.json()["bins"]) - 1.0) < 1e-9

    r = client.post("/presets", json={"kind": "uniform"})
    assert r.json()["bins"] == [pytest.approx(0.01)] * 100

    assert client.post("/presets", json={"kind": "delta"}).json()["code"] == "bad_spec"
    assert (
        client.post("/presets", json={"kind": "widest", "means": [1], "widths": [1]}).json()["code"]
        == "bad_spec"
    )
    r = client.post("/presets", json={"kind": "unimodal", "means": [400], "widths": [2]})
    assert r.status_code == 400 and r.json()["code"] == "bad_spec"
    r = client.post("/presets", json={})
    assert r.status_code == 400 and r.json()["code"] == "missing_field"
