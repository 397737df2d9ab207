"""
Tests for cache keys, the reuse cache and its persistent stores
"""
from concurrent.futures import ThreadPoolExecutor
import threading
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.adapters.storage.binary_cache_adapter import BinaryCacheAdapter
from src.adapters.storage.memory_cache_adapter import MemoryCacheAdapter
from src.core.domain import model_catalogue
from src.core.domain.errors import CollocationError, ConfigurationError, FormatError
from src.core.domain.events import EventType
from src.core.domain.polynomial_approx import ApproxDegrees
from src.core.domain.reuse_cache import CacheEntry, CacheKey, ReuseCache, stats


def key_of(model, bump=0, subdivisions=0):
    return CacheKey.for_model(model, ApproxDegrees.default(model.degrees).elevated(bump), subdivisions)


def counting_builders(calls):
    def table():
        calls.append("table")
        return {"table": np.arange(6.0).reshape(2, 3), "zeros": np.zeros(4)}

    def weights():
        calls.append("weights")
        return {"weights": np.array([0.5, 0.25, 0.25])}

    return {"table": table, "weights": weights}


def test_key_ignores_control_points():
    base = model_catalogue.unit_cube(degree=2, elements=2)
    a, b = model_catalogue.deformed_family(base, 2, seed=5)
    assert key_of(a) == key_of(b)
    assert key_of(a).key_hash() == key_of(base).key_hash()


def test_key_tracks_structure():
    base = model_catalogue.unit_cube(degree=2, elements=2)
    hashes = {
        key_of(base).key_hash(),
        key_of(model_catalogue.refine(base, 1)).key_hash(),
        key_of(model_catalogue.unit_cube(degree=3, elements=2)).key_hash(),
        key_of(base, bump=1).key_hash(),
        key_of(base, subdivisions=1).key_hash(),
    }
    assert len(hashes) == 5


def test_key_round_trips_through_dict(hollow_sphere):
    key = key_of(hollow_sphere)
    again = CacheKey.from_dict(key.as_dict())
    assert again == key
    assert again.key_hash() == key.key_hash()


def test_malformed_key_document():
    with pytest.raises(FormatError):
        CacheKey.from_dict({"degrees": [1, 1, 1]})


def test_builders_run_once_per_key(unit_cube):
    calls = []
    cache = ReuseCache()
    key = key_of(unit_cube)
    first = cache.get_or_build(key, counting_builders(calls))
    second = cache.get_or_build(key, counting_builders(calls))
    assert first is second
    assert calls == ["table", "weights"]
    assert cache.builder_calls == 2
    assert cache.hits == 1
    assert key in cache and len(cache) == 1


def test_concurrent_lookups_share_one_build(unit_cube):
    calls = []
    cache = ReuseCache()
    key = key_of(unit_cube)

    def slow():
        calls.append("slow")
        time.sleep(0.05)
        return {"value": np.ones(3)}

    with ThreadPoolExecutor(max_workers=8) as pool:
        entries = list(pool.map(lambda _: cache.get_or_build(key, {"slow": slow}), range(8)))
    assert calls == ["slow"]
    assert all(e is entries[0] for e in entries)
    assert cache.hits == 7


def test_hit_count_is_exact_under_contention(unit_cube):
    cache = ReuseCache()
    key = key_of(unit_cube)
    cache.get_or_build(key, counting_builders([]))

    def lookups(_):
        for _ in range(200):
            cache.get_or_build(key, counting_builders([]))

    with ThreadPoolExecutor(max_workers=16) as pool:
        list(pool.map(lookups, range(16)))
    assert cache.hits == 16 * 200
    assert cache.builder_calls == 2


def test_listener_may_call_back_into_cache(unit_cube):
    cache = ReuseCache()
    key = key_of(unit_cube)
    seen = []

    def listener(event):
        seen.append((event.event_type, len(cache.entries())))

    cache.register_event_listener(listener)
    worker = threading.Thread(target=lambda: [cache.get_or_build(key, counting_builders([])) for _ in range(2)],
                              daemon=True)
    worker.start()
    worker.join(timeout=10.0)
    assert not worker.is_alive()
    assert [s[0] for s in seen] == [EventType.CACHE_BUILT, EventType.CACHE_HIT]
    assert seen[1] == (EventType.CACHE_HIT, 1)


def test_duplicate_item_names_are_rejected(unit_cube):
    builders = {"a": lambda: {"x": np.zeros(1)}, "b": lambda: {"x": np.ones(1)}}
    with pytest.raises(ConfigurationError):
        ReuseCache().get_or_build(key_of(unit_cube), builders)


def test_entry_items_are_read_only(unit_cube):
    entry = ReuseCache().get_or_build(key_of(unit_cube), counting_builders([]))
    with pytest.raises(ValueError):
        entry.item("table")[0, 0] = 1.0
    with pytest.raises(ConfigurationError):
        entry.item("missing")


def test_stats_are_deterministic(unit_cube):
    key = key_of(unit_cube)
    one = ReuseCache().get_or_build(key, counting_builders([])).stats(include_timings=False)
    two = ReuseCache().get_or_build(key, counting_builders([])).stats(include_timings=False)
    assert one == two
    assert one["total_nnz"] == 5 + 0 + 3
    assert one["total_bytes"] == (6 + 4 + 3) * 8
    assert one["items"]["table"]["shape"] == [2, 3]
    assert stats(None)["total_nnz"] == 0


def test_binary_store_round_trip(tmp_path, unit_cube):
    key = key_of(unit_cube)
    calls = []
    built = ReuseCache(BinaryCacheAdapter(tmp_path)).get_or_build(key, counting_builders(calls))
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"{key.key_hash()}.bin",
                                                         f"{key.key_hash()}.manifest.json"]
    fresh = ReuseCache(BinaryCacheAdapter(tmp_path))
    loaded = fresh.get_or_build(key, counting_builders(calls))
    assert calls == ["table", "weights"]
    assert fresh.builder_calls == 0 and fresh.hits == 1
    for name, arr in built.items.items():
        assert np.array_equal(loaded.item(name), arr)


def test_binary_store_header(tmp_path, unit_cube):
    key = key_of(unit_cube)
    ReuseCache(BinaryCacheAdapter(tmp_path)).get_or_build(key, counting_builders([]))
    payload = (tmp_path / f"{key.key_hash()}.bin").read_bytes()
    assert payload[:8] == b"REUSEIGA"
    assert len(payload) == 16 + (6 + 4 + 3) * 8


def test_corrupt_store_entry_is_rebuilt(tmp_path, unit_cube):
    key = key_of(unit_cube)
    ReuseCache(BinaryCacheAdapter(tmp_path)).get_or_build(key, counting_builders([]))
    (tmp_path / f"{key.key_hash()}.bin").write_bytes(b"garbage")
    calls = []
    cache = ReuseCache(BinaryCacheAdapter(tmp_path))
    entry = cache.get_or_build(key, counting_builders(calls))
    assert calls == ["table", "weights"]
    assert_allclose(entry.item("weights"), [0.5, 0.25, 0.25])


def test_corrupt_file_raises_format_error(tmp_path, unit_cube):
    key = key_of(unit_cube)
    store = BinaryCacheAdapter(tmp_path)
    ReuseCache(store).get_or_build(key, counting_builders([]))
    (tmp_path / f"{key.key_hash()}.manifest.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        store.load(key.key_hash())


def test_unavailable_store_degrades_to_memory(unit_cube):
    events = []
    cache = ReuseCache(MemoryCacheAdapter(fail_with=OSError("disk gone")))
    cache.register_event_listener(events.append)
    entry = cache.get_or_build(key_of(unit_cube), counting_builders([]))
    assert entry.item("table").shape == (2, 3)
    assert cache.store is None
    assert [e.event_type for e in events] == [EventType.CACHE_DEGRADED, EventType.CACHE_BUILT]


def test_store_entry_of_another_key_is_rejected(unit_cube):
    store = MemoryCacheAdapter()
    key = key_of(unit_cube)
    other = key_of(unit_cube, bump=1)
    store.save(key.key_hash(), {"key": other.as_dict()}, {})
    with pytest.raises(ConfigurationError):
        ReuseCache(store).get_or_build(key, counting_builders([]))


def test_clear_removes_memory_and_files(tmp_path, unit_cube):
    cache = ReuseCache(BinaryCacheAdapter(tmp_path))
    cache.get_or_build(key_of(unit_cube), counting_builders([]))
    assert cache.clear() == 2
    assert len(cache) == 0
    assert list(tmp_path.iterdir()) == []


def test_singular_collocation_matrix(unit_cube):
    entry = CacheEntry(key_of(unit_cube), {
        "boundary_dofs": np.array([0.0, 1.0]),
        "collocation_data": np.array([1.0]),
        "collocation_row": np.array([0.0]),
        "collocation_col": np.array([0.0]),
    })
    with pytest.raises(CollocationError):
        entry.collocation_lu()
    assert entry.factorizations == 0
