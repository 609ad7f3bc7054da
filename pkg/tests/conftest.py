import numpy as np
import pytest

from viewsynth import synthscene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def plane_bundle():
    return synthscene.render(synthscene.preset("plane_z10"))


@pytest.fixture(scope="session")
def stereo_bundle():
    return synthscene.render(synthscene.preset("stereo_d4"))


@pytest.fixture(scope="session")
def two_plane_bundle():
    return synthscene.render(synthscene.preset("two_plane"))
