import threading
from dataclasses import replace

import numpy as np
import pytest

from srotlab.cache import DistanceCache, default_cache_dir, table_key
from srotlab.errors import IoError
from srotlab.frames import catalog
from srotlab.kantorovich import distance_table
from srotlab.metric import DEFAULT_OPTIONS

H = catalog("heisenberg")
X = np.random.default_rng(0).uniform(-0.5, 0.5, (4, 3))


def test_env_var_sets_location(cache_dir):
    assert default_cache_dir() == cache_dir
    assert DistanceCache().root == cache_dir


def test_round_trip_is_bit_identical(cache_dir):
    cache = DistanceCache()
    fresh = distance_table(H, X, X)
    first = cache.table(H, X, X, DEFAULT_OPTIONS)
    second = DistanceCache().table(H, X, X, DEFAULT_OPTIONS)
    for t in (first, second):
        assert np.array_equal(t.values, fresh.values)
        assert np.array_equal(t.covectors, fresh.covectors)
        assert list(t.methods.ravel()) == list(fresh.methods.ravel())
    assert cache.misses == 1 and cache.hits == 0


def test_second_lookup_skips_solves(cache_dir):
    calls = []
    cache = DistanceCache()
    key = table_key(H, X, X, DEFAULT_OPTIONS)

    def compute():
        calls.append(1)
        return distance_table(H, X, X)

    cache.get_or_compute(key, compute)
    cache.get_or_compute(key, compute)
    assert len(calls) == 1 and cache.hits == 1


def test_key_tracks_every_input():
    k = table_key(H, X, X, DEFAULT_OPTIONS)
    assert k == table_key(H, X.copy(), X.copy(), DEFAULT_OPTIONS)
    assert k != table_key(H, X, X, replace(DEFAULT_OPTIONS, vertical_grid=(0.0, 1.0)))
    assert k != table_key(H, X, X, replace(DEFAULT_OPTIONS, endpoint_tol=1e-9))
    assert k != table_key(catalog("martinet"), X, X, DEFAULT_OPTIONS)
    Y = X.copy()
    Y[0, 0] = np.nextafter(Y[0, 0], 1)
    assert k != table_key(H, Y, X, DEFAULT_OPTIONS)


def test_corrupted_entry_is_recomputed(cache_dir, caplog):
    cache = DistanceCache()
    ref = cache.table(H, X, X, DEFAULT_OPTIONS)
    path = cache.path(table_key(H, X, X, DEFAULT_OPTIONS))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 3])
    again = DistanceCache()
    with caplog.at_level("WARNING"):
        t = again.table(H, X, X, DEFAULT_OPTIONS)
    assert "unreadable" in caplog.text
    assert again.misses == 1 and np.array_equal(t.values, ref.values)
    assert DistanceCache().table(H, X, X, DEFAULT_OPTIONS) is not None


def test_concurrent_writers_compute_once(cache_dir):
    calls = []
    key = table_key(H, X, X, DEFAULT_OPTIONS)
    ref = distance_table(H, X, X)

    def compute():
        calls.append(1)
        return ref

    out = []
    threads = [threading.Thread(target=lambda: out.append(DistanceCache().get_or_compute(key, compute))) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1 and len(out) == 4
    assert all(np.array_equal(o.values, ref.values) for o in out)


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        DistanceCache(blocker / "sub").get_or_compute("k", lambda: None)
