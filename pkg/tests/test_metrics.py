import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plenumlab.metrics import (
    EmptyMask,
    compute_metrics,
    heatmap_export,
    read_heatmap_csv,
    write_metrics_csv,
)


def _mask(h=1, w=2):
    return np.ones((h, w), bool)


def test_perfect_prediction():
    truth = np.array([[[10.0, 20.0]]])
    r = compute_metrics(truth, truth, _mask())
    assert (r.mae, r.mape, r.r2) == (0.0, 0.0, 1.0)


def test_constant_mean_prediction_r2_zero():
    truth = np.array([[[10.0, 20.0]]] * 4)
    pred = np.full_like(truth, 15.0)
    assert compute_metrics(pred, truth, _mask()).r2 == 0.0


def test_hand_arithmetic():
    truth = np.array([[[10.0, 20.0]]])
    pred = np.array([[[11.0, 18.0]]])
    r = compute_metrics(pred, truth, _mask())
    assert r.mae == 1.5
    assert abs(r.mape - 10.0) < 1e-12
    assert abs(r.r2 - 0.9) < 1e-12
    assert r.n == 2


def test_empty_mask_rejected():
    with pytest.raises(EmptyMask):
        compute_metrics(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)),
                        np.zeros((2, 2), bool))


def test_zero_variance_conventions():
    truth = np.full((3, 1, 2), 5.0)
    mask = _mask(1, 2)
    assert compute_metrics(truth, truth, mask).r2 == 1.0
    pred = truth + 0.1
    assert compute_metrics(pred, truth, mask).r2 == float("-inf")


def test_near_zero_truth_excluded_from_mape():
    truth = np.array([[[1e-9, 20.0]]])
    pred = np.array([[[1.0, 22.0]]])
    r = compute_metrics(pred, truth, _mask())
    assert r.excluded == 1
    assert abs(r.mape - 10.0) < 1e-12


def test_window_selects_trailing_steps():
    truth = np.zeros((10, 1, 1, 1))
    truth[:, 0, 0, 0] = np.arange(10.0) + 1
    pred = truth.copy()
    pred[:5] += 100  # errors confined to the excluded head
    r = compute_metrics(pred, truth, np.ones((1, 1), bool), window=5)
    assert r.mae == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_permutation_invariance(seed):
    gen = np.random.default_rng(seed)
    truth = gen.random((6, 1, 3, 3)) + 1.0
    pred = truth + gen.normal(0, 0.1, truth.shape)
    mask = np.ones((3, 3), bool)
    r1 = compute_metrics(pred, truth, mask)
    perm = gen.permutation(6)
    r2 = compute_metrics(pred[perm], truth[perm], mask)
    assert np.isclose(r1.mae, r2.mae)
    assert np.isclose(r1.mape, r2.mape)
    assert np.isclose(r1.r2, r2.r2)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.01, max_value=100.0))
def test_joint_scaling(c):
    gen = np.random.default_rng(1)
    truth = gen.random((4, 1, 3, 3)) + 1.0
    pred = truth + gen.normal(0, 0.1, truth.shape)
    mask = np.ones((3, 3), bool)
    r1 = compute_metrics(pred, truth, mask)
    r2 = compute_metrics(c * pred, c * truth, mask)
    assert np.isclose(r2.mae, c * r1.mae)
    assert np.isclose(r2.mape, r1.mape)
    assert np.isclose(r2.r2, r1.r2)


def test_per_cell_and_boxstats():
    gen = np.random.default_rng(2)
    truth = gen.random((8, 4, 5, 5)) + 1.0
    pred = truth + gen.normal(0, 0.05, truth.shape)
    mask = np.ones((5, 5), bool)
    mask[0, 0] = False
    r = compute_metrics(pred, truth, mask, per_cell=True, per_layer=True)
    assert np.isnan(r.per_cell_mape[0, 0])
    assert np.isfinite(r.per_cell_mape[mask]).all()
    assert len(r.per_layer_boxstats) == 4
    for stats in r.per_layer_boxstats:
        assert stats["q1"] <= stats["median"] <= stats["q3"]
        assert stats["whisker_lo"] <= stats["q1"]
        assert stats["q3"] <= stats["whisker_hi"]


def test_metrics_csv_schema(tmp_path):
    r = compute_metrics(np.ones((2, 1, 2)), np.ones((2, 1, 2)),
                        np.ones((1, 2), bool))
    path = tmp_path / "m.csv"
    write_metrics_csv(path, r.rows())
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "scope,layer,metric,value,n,excluded"
    assert len(lines) == 4


def test_heatmap_roundtrip(tmp_path):
    field = np.arange(225, dtype=float).reshape(15, 15)
    geom = np.ones((15, 15), bool)
    geom[0, :3] = False
    csv_path, pgm_path = heatmap_export(field, geom, tmp_path / "h")
    back = read_heatmap_csv(csv_path)
    assert np.allclose(back[geom], field[geom])
    assert np.isnan(back[0, 0])
    header = open(pgm_path, "rb").read(20)
    assert header.startswith(b"P5\n15 15\n255\n")


def test_heatmap_all_zero_field(tmp_path):
    geom = np.ones((15, 15), bool)
    csv_path, pgm_path = heatmap_export(np.zeros((15, 15)), geom,
                                        tmp_path / "z")
    img = open(pgm_path, "rb").read()[13:]
    vals = np.frombuffer(img, np.uint8)
    assert len(set(vals.tolist())) == 1  # uniform shade
    lines = open(csv_path).read().strip().splitlines()
    assert all(line.endswith(",0") for line in lines[1:])
