"""Shared fixtures: the rho = 2/3 model map is expensive, so it is built once."""

import pytest

from config.settings import AtlasConfig
from services.family_service import make_slice
from services.model_service import model_setup

RHO = 2.0 / 3.0
# a parameter whose asymptotic values both fall into the origin's basin
SHIFT_LAMBDA = -0.1


@pytest.fixture(scope="session")
def config():
    return AtlasConfig()


@pytest.fixture(scope="session")
def model(config):
    return model_setup(RHO, config)


@pytest.fixture(scope="session")
def shift_slice():
    return make_slice(RHO, SHIFT_LAMBDA)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ATLAS_OUTPUT_DIR", str(tmp_path))
    return tmp_path
