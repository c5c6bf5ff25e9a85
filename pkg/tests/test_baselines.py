import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscn.baselines import LRUCache, LRUState, genie_aided_caching, lru_update, uniform_caching
from cscn.cache import alternating_update
from cscn.model import validate_config
from cscn.scenario import Scenario


@pytest.mark.parametrize("mu", [0.0, 0.2, 1.0])
def test_uniform(mu):
    cfg = validate_config(profile="desk", fractional_capacity=mu)
    L = uniform_caching(cfg)
    assert np.all(L.fractions == mu)
    L.check(cfg)


def test_lru_trace():
    c = LRUCache(2.0, np.ones(4))
    for f in (1, 2, 3):
        lru_update(c, f, True)
    assert list(c.entries) == [2, 3] and all(v == 1.0 for v in c.entries.values())


def test_lru_hit_updates_recency_only():
    c = LRUCache(2.0, np.ones(4))
    for f in (1, 2):
        c.access(f)
    before = dict(c.entries)
    c.access(1)
    assert dict(c.entries) == before and list(c.entries) == [2, 1]


def test_lru_zero_capacity():
    c = LRUCache(0.0, np.ones(3))
    for f in (0, 1, 2, 0):
        c.access(f)
    assert not c.entries and c.used() == 0.0


def test_lru_miss_without_serving_is_ignored():
    c = LRUCache(2.0, np.ones(3))
    c.access(0, serving=False)
    assert not c.entries


def test_lru_partial_last_eviction():
    c = LRUCache(2.5, np.ones(4))
    for f in (0, 1):
        c.access(f)
    c.access(2)  # 0.5 free: evict half of file 0
    assert c.entries[0] == pytest.approx(0.5) and c.entries[2] == 1.0
    assert c.used() == pytest.approx(2.5)


def test_lru_file_larger_than_cache():
    c = LRUCache(0.5, np.array([1.0, 2.0]))
    c.access(1)
    assert c.entries == {1: 0.25}


@given(st.lists(st.tuples(st.integers(0, 7), st.booleans()), max_size=60),
       st.floats(0.0, 6.0), st.integers(0, 2 ** 32 - 1))
def test_lru_never_overflows(seq, cap, seed):
    sizes = np.random.default_rng(seed).uniform(0.3, 2.0, 8)
    c = LRUCache(cap, sizes)
    for f, serving in seq:
        c.access(f, serving)
        assert c.used() <= cap * (1 + 1e-9) + 1e-12
        assert sum(0 < v < 1 for v in c.entries.values()) <= 2
        assert all(0 < v <= 1 for v in c.entries.values())


def test_lru_state_prefill_and_record():
    cfg = validate_config(profile="desk", fractional_capacity=0.2)
    st_ = LRUState(cfg)
    L = st_.allocation()
    L.check(cfg)
    assert np.all(L.fractions[:2] == 1.0) and np.all(L.fractions[2:] == 0.0)
    E = np.zeros((cfg.num_files, cfg.num_sbs))
    E[7, 1] = 1
    st_.record(E)
    L = st_.allocation().fractions
    assert L[7, 1] == 1.0 and L[:, 1].sum() == 2.0 and L[7, 0] == 0.0
    assert np.all(LRUState(cfg.replace(fractional_capacity=1.0)).allocation().fractions == 1.0)


def test_gac_equals_update_on_same_window():
    cfg = validate_config(profile="desk", fractional_capacity=0.4, block_length=4)
    window = Scenario(cfg).window(2)
    gac = genie_aided_caching(window, cfg)
    prop = alternating_update(window, uniform_caching(cfg), cfg)
    np.testing.assert_array_equal(gac.allocation.fractions, prop.allocation.fractions)
