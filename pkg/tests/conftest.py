"""Shared fixtures."""

import pytest

from src.config import settings
from src.core.rng import RngStream


@pytest.fixture(autouse=True)
def restore_settings():
    """CLI runs mutate the global settings; put them back after each test."""
    snapshot = settings.model_dump()
    yield
    for name, value in snapshot.items():
        setattr(settings, name, value)


@pytest.fixture
def stream() -> RngStream:
    return RngStream(20240917)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    directory = tmp_path / "results"
    monkeypatch.setattr(settings, "OUT_DIR", str(directory))
    return directory
