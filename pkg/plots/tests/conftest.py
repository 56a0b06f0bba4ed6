from pathlib import Path

import pytest

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


@pytest.fixture(scope="session")
def samples():
    assert SAMPLES.is_dir(), "checked-in sample artifacts are part of the package"
    return SAMPLES
