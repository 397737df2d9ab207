"""
Shared pytest fixtures
"""
import numpy as np
import pytest

from src.core.domain import model_catalogue
from src.core.domain.reuse_cache import ReuseCache
from src.adapters.storage.memory_cache_adapter import MemoryCacheAdapter


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_cube():
    return model_catalogue.unit_cube(degree=2, elements=1)


@pytest.fixture
def trilinear_cube():
    return model_catalogue.unit_cube(degree=1, elements=1)


@pytest.fixture
def hollow_sphere():
    return model_catalogue.hollow_sphere_octant(degree=3, elements=1)


@pytest.fixture
def memory_cache():
    return ReuseCache(MemoryCacheAdapter())


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv("REUSE_IGA_CACHE_DIR", str(path))
    return path
