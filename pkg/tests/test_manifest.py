import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodgen.exceptions import ConfigError, InvalidInput
from floodgen.manifest import (
    DatasetManifest,
    NormConstants,
    compute_norm_constants,
    denormalize,
    load_manifest,
    normalize,
    normalize_depth,
    normalize_rainfall,
    normalize_terrain,
    split_patterns,
)
from floodgen.patches import DepthPatch, RainfallPattern, TerrainPatch


def make_patterns(n):
    return [RainfallPattern(f"p{i:02d}", np.full(12, 1.0 + i)) for i in range(n)]


def test_split_18_patterns_is_12_6():
    train, test = split_patterns(make_patterns(18), rng_seed=0)
    assert len(train) == 12 and len(test) == 6
    assert not set(train) & set(test)


def test_split_3_patterns_is_2_1():
    train, test = split_patterns(make_patterns(3), rng_seed=1)
    assert len(train) == 2 and len(test) == 1


def test_split_is_deterministic():
    patterns = make_patterns(18)
    assert split_patterns(patterns, 42) == split_patterns(patterns, 42)


def test_split_rejects_fewer_than_two():
    with pytest.raises(InvalidInput):
        split_patterns(make_patterns(1), 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 24), seed=st.integers(0, 10_000))
def test_split_is_disjoint_and_exhaustive(n, seed):
    patterns = make_patterns(n)
    train, test = split_patterns(patterns, seed)
    assert set(train) | set(test) == {p.id for p in patterns}
    assert not set(train) & set(test)
    assert len(train) >= 1 and len(test) >= 1


def make_norm():
    return NormConstants(
        terrain_mean=np.array([10, 0, 0.5, 0, 0, 0.01], np.float32),
        terrain_std=np.array([5, 1, 0.4, 0.7, 0.7, 0.02], np.float32),
        depth_max=2.5,
        rainfall_max=40.0,
    )


def test_depth_endpoint_normalizes_to_one():
    norm = make_norm()
    assert normalize_depth(np.array([norm.depth_max]), norm)[0] == 1.0
    assert normalize_depth(np.array([2 * norm.depth_max]), norm)[0] == 1.0  # clipped


def test_zero_rainfall_stays_zero():
    norm = make_norm()
    assert np.all(normalize_rainfall(np.zeros(12), norm) == 0.0)


def test_mask_channel_passes_through():
    norm = make_norm()
    data = np.random.default_rng(0).standard_normal((6, 8, 8)).astype(np.float32)
    data[1] = np.where(data[1] > 0, 1.0, -1.0)
    out = normalize_terrain(data, norm)
    assert np.array_equal(out[1], data[1])


def test_round_trip_on_random_patches():
    norm = make_norm()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        tdata = rng.standard_normal((6, 16, 16)).astype(np.float32)
        tdata[1] = np.where(tdata[1] > 0, 1.0, -1.0)
        tpatch = TerrainPatch(tdata)
        back = denormalize(normalize(tpatch, norm), norm)
        worst = max(worst, float(np.abs(back.data - tdata).max()))

        ddata = rng.uniform(0, norm.depth_max, (1, 16, 16)).astype(np.float32)
        dpatch = DepthPatch(ddata)
        dback = denormalize(normalize(dpatch, norm), norm)
        worst = max(worst, float(np.abs(dback.data - ddata).max()))

        pattern = RainfallPattern("x", rng.uniform(0, norm.rainfall_max, 12))
        pback = denormalize(normalize(pattern, norm), norm)
        worst = max(worst, float(np.abs(pback.values - pattern.values).max()))
    assert worst < 1e-6


def test_zero_std_substitutes_one_and_warns():
    norm = NormConstants(
        terrain_mean=np.zeros(6),
        terrain_std=np.array([1, 1, 0, 1, 1, 1], np.float32),
        depth_max=1.0,
        rainfall_max=1.0,
    )
    data = np.zeros((6, 4, 4), np.float32)
    data[1] = 1.0
    data[2] = 3.0
    with pytest.warns(UserWarning):
        out = normalize_terrain(data, norm)
    assert np.all(out[2] == 3.0)  # divided by substituted std=1


def test_normalize_rejects_unknown_type():
    with pytest.raises(InvalidInput):
        normalize(np.zeros(3), make_norm())


def test_normalize_accepts_a_manifest(tiny_dataset):
    pattern = next(iter(tiny_dataset.patterns.values()))
    via_manifest = normalize(pattern, tiny_dataset)
    via_constants = normalize(pattern, tiny_dataset.norm)
    assert np.array_equal(via_manifest.values, via_constants.values)


def test_norm_constants_ignore_test_split_data(tiny_catchment, tmp_path):
    from floodgen.manifest import build_dataset
    from floodgen.synth import synth_rainfall_patterns

    raster, depths, patterns = tiny_catchment
    base = build_dataset(tmp_path / "a", raster, depths, patterns, rng_seed=3)
    manifest_a = load_manifest(base)
    # scale every held-out depth grid and pattern; constants must not move
    mutated_depths = {
        pid: grid * (10.0 if pid in manifest_a.test_ids else 1.0)
        for pid, grid in depths.items()
    }
    mutated_patterns = [
        p if p.id in manifest_a.train_ids else type(p)(p.id, p.values * 10.0)
        for p in patterns
    ]
    manifest_b = load_manifest(
        build_dataset(tmp_path / "b", raster, mutated_depths, mutated_patterns, rng_seed=3)
    )
    assert manifest_b.train_ids == manifest_a.train_ids
    assert manifest_b.norm.depth_max == manifest_a.norm.depth_max
    assert manifest_b.norm.rainfall_max == manifest_a.norm.rainfall_max
    assert np.array_equal(manifest_b.norm.terrain_mean, manifest_a.norm.terrain_mean)


def test_norm_constants_come_from_train_patterns(tiny_catchment):
    raster, depths, patterns = tiny_catchment
    train = patterns[:4]
    grids = [[depths[p.id] for p in train]]
    norm = compute_norm_constants([raster], grids, train)
    assert norm.rainfall_max == max(float(p.values.max()) for p in train)
    eff = raster.effective
    assert norm.depth_max == max(float(depths[p.id][eff].max()) for p in train)


def test_manifest_round_trip(tiny_dataset):
    manifest = tiny_dataset
    reloaded = load_manifest(manifest.base_dir / "manifest.cfg")
    assert reloaded.train_ids == manifest.train_ids
    assert reloaded.test_ids == manifest.test_ids
    assert set(reloaded.patterns) == set(manifest.patterns)
    assert reloaded.norm is not None
    assert reloaded.norm.depth_max == manifest.norm.depth_max
    assert np.allclose(reloaded.norm.terrain_mean, manifest.norm.terrain_mean)
    assert np.allclose(reloaded.norm.terrain_std, manifest.norm.terrain_std)


def test_manifest_rejects_overlapping_split(tiny_dataset):
    with pytest.raises(InvalidInput):
        DatasetManifest(
            catchments=dict(tiny_dataset.catchments),
            patterns=dict(tiny_dataset.patterns),
            train_ids=tiny_dataset.train_ids,
            test_ids=tiny_dataset.train_ids[:1] + tiny_dataset.test_ids,
        )


def test_manifest_rejects_incomplete_split(tiny_dataset):
    with pytest.raises(InvalidInput):
        DatasetManifest(
            catchments=dict(tiny_dataset.catchments),
            patterns=dict(tiny_dataset.patterns),
            train_ids=tiny_dataset.train_ids,
            test_ids=tiny_dataset.test_ids[:-1],
        )


def test_missing_manifest_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "nope.cfg")


def test_norm_constants_validate():
    with pytest.raises(InvalidInput):
        NormConstants(np.zeros(6), np.ones(6), depth_max=0.0, rainfall_max=1.0)
    with pytest.raises(InvalidInput):
        NormConstants(np.zeros(6), np.ones(6), depth_max=1.0, rainfall_max=np.nan)
