import numpy as np
import pytest

from lesionforge.data import build_phantom_dataset, load_slice_dataset
from lesionforge.phantoms import config_for_size
from lesionforge.segeval import (
    FULL_SCALE_REFERENCE_F1,
    ROW_LABELS,
    ExperimentReport,
    ExperimentRow,
    SegConfig,
    evaluate,
    f1_score,
    predict,
    run_experiment,
    seg_forward,
    seg_init,
    train_segmenter,
)


def test_f1_matches_sklearn_oracle():
    from sklearn.metrics import f1_score as sk_f1

    rng = np.random.default_rng(0)
    for trial in range(20):
        pred = rng.random((13, 13)) < rng.uniform(0.1, 0.6)
        truth = rng.random((13, 13)) < rng.uniform(0.1, 0.6)
        ours = f1_score(pred, truth)
        theirs = sk_f1(truth.ravel(), pred.ravel(), zero_division=1.0)
        assert ours == pytest.approx(theirs, abs=1e-12)


def test_f1_edge_cases():
    empty = np.zeros((4, 4), dtype=bool)
    full = np.ones((4, 4), dtype=bool)
    assert f1_score(empty, empty) == 1.0  # nothing to find, nothing claimed
    assert f1_score(full, empty) == 0.0
    assert f1_score(empty, full) == 0.0
    assert f1_score(full, full) == 1.0
    with pytest.raises(ValueError):
        f1_score(np.zeros((4, 4)), np.zeros((4, 5)))


def test_seg_config_validation():
    with pytest.raises(ValueError):
        SegConfig(depth=0)
    with pytest.raises(ValueError):
        SegConfig(pos_weight=0.0)
    with pytest.raises(ValueError):
        SegConfig(threshold=1.5)


def test_seg_forward_shapes_and_determinism():
    cfg = SegConfig(depth=2, base_channels=4)
    params = seg_init(cfg, seed=0)
    images = np.random.default_rng(1).random((2, 1, 16, 16)).astype(np.float32)
    a, _ = seg_forward(params, images, mode="eval")
    b, _ = seg_forward(params, images, mode="eval")
    assert a.shape == (2, 1, 16, 16)
    assert np.array_equal(a, b)


@pytest.fixture(scope="module")
def lesioned_ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("segdata")
    build_phantom_dataset(root, 4, seed=60, config=config_for_size(64))
    return load_slice_dataset(root)


def test_segmenter_overfits_its_training_set(lesioned_ds, tmp_path):
    cfg = SegConfig(depth=2, base_channels=8, epochs=40, batch_size=1, seed=0)
    params, log = train_segmenter(lesioned_ds, cfg, out_dir=tmp_path)
    score = evaluate(params, lesioned_ds, cfg.threshold)
    assert score > 0.6  # 4 slices, tiny net: learnable well past chance
    assert (tmp_path / "seg_metrics.log").exists()
    assert len(log) == 40 * 4


def test_segmenter_deterministic(lesioned_ds):
    cfg = SegConfig(depth=2, base_channels=4, epochs=2, batch_size=2, seed=5)
    pa, _ = train_segmenter(lesioned_ds, cfg)
    pb, _ = train_segmenter(lesioned_ds, cfg)
    assert all(np.array_equal(pa.tensors[k], pb.tensors[k]) for k in pa.tensors)


def test_predict_batches_match_single(lesioned_ds):
    cfg = SegConfig(depth=2, base_channels=4, seed=1)
    params = seg_init(cfg, seed=1)
    from lesionforge.segeval import _to_arrays

    images, _ = _to_arrays(lesioned_ds)
    probs_all = predict(params, images, batch_size=8)
    probs_two = predict(params, images, batch_size=2)
    assert np.allclose(probs_all, probs_two, atol=1e-6)
    assert np.all(probs_all >= 0) and np.all(probs_all <= 1)


def test_report_rows_and_reference():
    report = ExperimentReport(
        rows=tuple(ExperimentRow(lbl, 0.5, (0.5,)) for lbl in ROW_LABELS),
        seeds=(0,),
    )
    text = report.text_table()
    for lbl in ROW_LABELS:
        assert lbl in text
    assert "0.5996" in text and "0.3409" in text and "0.4013" in text
    record = report.to_record()
    assert [r["label"] for r in record["rows"]] == list(ROW_LABELS)
    assert record["reference"] == FULL_SCALE_REFERENCE_F1


def test_run_experiment_orders_rows(lesioned_ds):
    cfg = SegConfig(depth=2, base_channels=4, epochs=1, batch_size=4)
    report = run_experiment(lesioned_ds, lesioned_ds, lesioned_ds, lesioned_ds, cfg, seeds=[0, 1])
    assert tuple(r.label for r in report.rows) == ROW_LABELS
    assert report.seeds == (0, 1)
    assert all(len(r.per_seed) == 2 for r in report.rows)
    with pytest.raises(ValueError):
        run_experiment(lesioned_ds, lesioned_ds, lesioned_ds, lesioned_ds, cfg, seeds=[])
