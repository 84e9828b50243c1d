import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plenumlab.dataprep import (
    DegenerateLevel,
    LevelOutOfRange,
    MaskSet,
    checkerboard_masks,
    make_inpaint_samples,
    minmax_apply,
    minmax_fit,
    minmax_invert,
    split_sequential,
    synth_dataset,
    write_mask_csv,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)
from plenumlab.geometry import build_assembly_map


# --- masks -------------------------------------------------------------------

def test_checkerboard_full_square():
    geom = np.ones((2, 2), bool)
    ms = checkerboard_masks(geom, phase=0)
    assert int(ms.miss.sum()) == 2
    assert int(ms.obs.sum()) == 2


def test_checkerboard_on_assembly_map(assembly_map):
    ms = checkerboard_masks(assembly_map.valid, phase=0)
    hidden = int(ms.miss.sum())
    assert hidden in (96, 97)
    assert abs(hidden / 193 - 0.5) < 0.01
    assert not (ms.obs & ms.miss).any()


def test_checkerboard_phases_partition(assembly_map):
    m0 = checkerboard_masks(assembly_map.valid, 0)
    m1 = checkerboard_masks(assembly_map.valid, 1)
    assert np.array_equal(m0.miss | m1.miss, assembly_map.valid)
    assert not (m0.miss & m1.miss).any()


def test_maskset_invariants_enforced():
    geom = np.ones((3, 3), bool)
    miss = np.zeros((3, 3), bool)
    miss[0, 0] = True
    MaskSet(geom=geom, miss=miss, obs=geom & ~miss)
    with pytest.raises(ValueError):
        MaskSet(geom=geom, miss=miss, obs=geom)
    bad_miss = np.ones((3, 3), bool)
    with pytest.raises(ValueError):
        MaskSet(geom=~bad_miss, miss=bad_miss, obs=np.zeros((3, 3), bool))


def test_empty_geometry_rejected():
    with pytest.raises(ValueError):
        checkerboard_masks(np.zeros((4, 4), bool))


def test_mask_csv(tmp_path, assembly_map):
    ms = checkerboard_masks(assembly_map.valid)
    path = tmp_path / "m.csv"
    write_mask_csv(ms, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "row,col,geom,miss,obs"
    assert len(lines) - 1 == 225


# --- z-score normalization ----------------------------------------------------

def test_zscore_hand_values():
    values = np.zeros((2, 1, 1, 2))
    values[0, 0, 0], values[1, 0, 0] = (1.0, 1.0), (3.0, 3.0)
    obs = np.ones((1, 2), bool)
    norm = zscore_fit(values, obs)
    assert norm.mu[0] == 2.0
    assert norm.sigma[0] == 1.0  # population convention
    z = zscore_apply(values, norm)
    assert np.allclose(np.unique(z), [-1.0, 1.0])


def test_zscore_constant_field_floors_sigma():
    values = np.full((3, 2, 4, 4), 7.0)
    obs = np.ones((4, 4), bool)
    with pytest.warns(DegenerateLevel):
        norm = zscore_fit(values, obs)
    assert np.all(norm.sigma == 1e-8)
    assert np.allclose(zscore_apply(values, norm), 0.0)


def test_zscore_fit_ignores_hidden_cells():
    gen = np.random.default_rng(0)
    values = gen.random((10, 2, 6, 6))
    obs = np.zeros((6, 6), bool)
    obs[:3] = True
    norm = zscore_fit(values, obs)
    poisoned = values.copy()
    poisoned[:, :, ~obs] = 1e6
    norm2 = zscore_fit(poisoned, obs)
    assert np.array_equal(norm.mu, norm2.mu)
    assert np.array_equal(norm.sigma, norm2.sigma)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_zscore_roundtrip(seed):
    gen = np.random.default_rng(seed)
    values = gen.random((5, 3, 4, 4)) * 100 + 10
    obs = np.ones((4, 4), bool)
    norm = zscore_fit(values, obs)
    back = zscore_invert(zscore_apply(values, norm), norm)
    assert np.abs(back - values).max() / np.abs(values).max() < 1e-6


def test_no_leakage_from_validation_perturbation():
    gen = np.random.default_rng(5)
    values = gen.random((20, 4, 15, 15))
    obs = checkerboard_masks(build_assembly_map(0.215).valid).obs
    tr, va, te = split_sequential(20, (0.45, 0.10, 0.45))
    norm = zscore_fit(values[np.fromiter(tr, int)], obs)
    perturbed = values.copy()
    perturbed[list(va) + list(te)] += 1e3
    norm2 = zscore_fit(perturbed[np.fromiter(tr, int)], obs)
    assert np.array_equal(norm.mu, norm2.mu)
    assert np.array_equal(norm.sigma, norm2.sigma)


# --- min-max normalization -----------------------------------------------------

def test_minmax_hand_values():
    values = np.array([[2.0], [4.0], [6.0]])
    norm = minmax_fit(values)
    assert np.allclose(minmax_apply(values, norm).ravel(), [0, 0.5, 1.0])


def test_minmax_constant_feature_maps_to_zero():
    values = np.full((5, 3), 2.5)
    norm = minmax_fit(values)
    z = minmax_apply(values, norm)
    assert np.all(z == 0.0)
    assert np.all(np.isfinite(z))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_minmax_roundtrip(seed):
    gen = np.random.default_rng(seed)
    values = gen.random((8, 6)) * 50
    norm = minmax_fit(values)
    back = minmax_invert(minmax_apply(values, norm), norm)
    assert np.allclose(back, values, atol=1e-9)


# --- splits --------------------------------------------------------------------

def test_split_paper_fractions():
    tr, va, te = split_sequential(10000, (0.45, 0.10, 0.45))
    assert (len(tr), len(va), len(te)) == (4500, 1000, 4500)


def test_split_small_and_empty():
    assert tuple(map(len, split_sequential(10, (0.6, 0.2, 0.2)))) == (6, 2, 2)
    assert tuple(map(len, split_sequential(0, (0.45, 0.1, 0.45)))) \
        == (0, 0, 0)


def test_split_partitions_exhaustively():
    for t in range(0, 1001):
        tr, va, te = split_sequential(t, (0.45, 0.10, 0.45))
        assert list(tr) + list(va) + list(te) == list(range(t))


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split_sequential(10, (0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        split_sequential(-1, (0.45, 0.10, 0.45))


# --- inpaint samples -------------------------------------------------------------

def _prepared(t=20, levels=(0, 1, 2, 3), coord=False):
    ds = synth_dataset("drift", t, 3)
    ms = checkerboard_masks(ds.geom_mask)
    splits = split_sequential(t, (0.45, 0.10, 0.45))
    norm = zscore_fit(ds.values[np.fromiter(splits[0], int)][:, list(levels)],
                      ms.obs)
    sets = make_inpaint_samples(ds, levels, ms, norm, splits,
                                coord_channels=coord)
    return ds, ms, norm, sets


def test_inpaint_sample_shapes():
    ds, ms, norm, sets = _prepared()
    assert sets["train"].inputs.shape[1:] == (3, 4, 15, 15)
    assert sets["train"].targets.shape[1:] == (1, 4, 15, 15)
    assert sets["train"].miss.shape == (4, 15, 15)
    assert len(sets["train"]) == 9


def test_inpaint_sample_channel_zero_hidden_is_zero():
    ds, ms, norm, sets = _prepared()
    s = sets["test"]
    assert np.all(s.inputs[:, 0][:, s.miss] == 0.0)
    assert np.all(s.targets[:, 0][:, :, ~ds.geom_mask] == 0.0)


def test_inpaint_sample_coordinate_channels():
    ds, ms, norm, sets = _prepared(coord=True)
    s = sets["train"]
    assert s.inputs.shape[1] == 5
    assert np.allclose(s.inputs[0, 3, 0, 7, 0], 7 / 15)
    assert np.allclose(s.inputs[0, 4, 0, 0, 9], 9 / 15)


def test_inpaint_levels_out_of_range():
    ds, ms, norm, _ = _prepared()
    with pytest.raises(LevelOutOfRange):
        make_inpaint_samples(ds, [0, 12], ms, norm,
                             split_sequential(20, (0.45, 0.1, 0.45)))


# --- synthetic datasets -----------------------------------------------------------

def test_synth_deterministic():
    a = synth_dataset("drift", 40, 9)
    b = synth_dataset("drift", 40, 9)
    assert np.array_equal(a.values, b.values)
    c = synth_dataset("drift", 40, 10)
    assert not np.array_equal(a.values, c.values)


def test_synth_noise_statistics():
    t = 100
    ds = synth_dataset("noise", t, 1)
    geom = ds.geom_mask
    mean = 90.0
    sd = 5.0
    cell_means = ds.values[:, :, geom].mean(axis=0)
    assert np.abs(cell_means - mean).max() < 3 * sd / np.sqrt(t) * 1.7


def test_synth_drift_layer_damping():
    ds = synth_dataset("drift", 60, 2)
    geom = ds.geom_mask
    var1 = ds.values[:, 0][:, geom].var(axis=1).mean()
    var9 = ds.values[:, 8][:, geom].var(axis=1).mean()
    assert var9 < var1


def test_synth_blobs_and_invalid_zero():
    ds = synth_dataset("blobs", 10, 4)
    assert np.all(ds.values[:, :, ~ds.geom_mask] == 0.0)
    assert ds.n_steps == 10
    with pytest.raises(ValueError):
        synth_dataset("fractal", 10, 0)
