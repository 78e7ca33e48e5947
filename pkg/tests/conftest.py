import numpy as np
import pytest
from hypothesis import settings

from airgrid.synthetic import make_world, write_world

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def world():
    return make_world()


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture")
    write_world(d)
    return d


@pytest.fixture(scope="session")
def feature_matrix(world):
    from airgrid.dataset import build_feature_matrix
    from airgrid.stations import apply_qc

    kept, _ = apply_qc(world.series)
    return build_feature_matrix(kept, world.sources)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
