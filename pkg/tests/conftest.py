import pytest

from floodgen.manifest import build_dataset, load_manifest
from floodgen.synth import synth_catchment, synth_rainfall_patterns
from floodgen.training import TrainConfig


@pytest.fixture(scope="session")
def tiny_catchment():
    """256x256 synthetic catchment with 6 rainfall patterns."""
    patterns = synth_rainfall_patterns(3, 6)
    raster, depths, patterns = synth_catchment(3, 256, patterns)
    return raster, depths, patterns


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_catchment):
    """The tiny catchment written to disk with a complete manifest."""
    raster, depths, patterns = tiny_catchment
    out = tmp_path_factory.mktemp("dataset")
    manifest_path = build_dataset(out, raster, depths, patterns, rng_seed=3)
    return load_manifest(manifest_path)


def make_mini_config(manifest_path, out_dir, **kw):
    """Desk-scale training config: 32px patches, narrow 2-level nets."""
    defaults = dict(
        manifest_path=str(manifest_path),
        out_dir=str(out_dir),
        batch_size=4,
        epochs=2,
        patch_size=32,
        gen_channels=(8, 16),
        rainfall_channels=4,
        disc_channels=(8, 16),
        patches_per_epoch=8,
        seed=11,
        checkpoint_interval=1,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture
def mini_config_factory(tiny_dataset, tmp_path):
    def make(subdir="run", **kw):
        return make_mini_config(
            tiny_dataset.base_dir / "manifest.cfg", tmp_path / subdir, **kw
        )

    return make
