from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from taco.data import load_force_frame, load_frame, sidecar_path

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile(
    "taco", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("taco")


def load_fixture(path: Path):
    return load_force_frame(path) if sidecar_path(path).exists() else load_frame(path)


def fixture_paths():
    return sorted(FIXTURES.glob("*.ppm"))


@pytest.fixture(scope="session")
def fixture_frames():
    return {p.stem: load_fixture(p) for p in fixture_paths()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
