import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscn.model import (CacheAllocation, ConfigError, PowerBreakdown, RequestSlot, db_to_linear, dbm_to_watts,
                        dump_config, linear_to_db, load_config, validate_config)


def test_db_examples():
    assert db_to_linear(0.0) == 1.0
    assert dbm_to_watts(40.0) == pytest.approx(10.0, rel=1e-12)
    assert db_to_linear(5.0) == pytest.approx(3.1623, abs=1e-4)


@given(st.floats(min_value=1e-12, max_value=1e12))
def test_db_round_trip(x):
    assert db_to_linear(linear_to_db(x)) == pytest.approx(x, rel=1e-12)


def test_storage_from_mu():
    cfg = validate_config(profile="paper", fractional_capacity=0.2)
    assert cfg.num_files == 100 and cfg.num_sbs == 7
    np.testing.assert_allclose(cfg.storage, 2e9)


def test_mu_out_of_box():
    with pytest.raises(ConfigError) as exc:
        validate_config(profile="desk", fractional_capacity=1.1)
    assert exc.value.field == "fractional_capacity"


def test_rate_derived():
    cfg = validate_config(profile="desk", sinr_target=3.1623, bandwidth=1e7)
    assert cfg.rates[0] == pytest.approx(2.056e7, rel=1e-3)
    assert "rates" not in {f for f in cfg.__dataclass_fields__}


@given(st.floats(0.0, 1.0), st.integers(1, 5), st.integers(1, 12))
def test_mu_identity(mu, B, F):
    cfg = validate_config(profile="desk", fractional_capacity=mu, num_sbs=B, num_files=F)
    assert cfg.storage.sum() / (B * cfg.file_sizes.sum()) == pytest.approx(mu, abs=1e-12)


def test_storage_implies_mu():
    cfg = validate_config(profile="desk", storage=[1e8, 2e8, 3e8])
    assert cfg.fractional_capacity == pytest.approx(6e8 / (3 * 1e9))


@pytest.mark.parametrize("key,value", [("num_sbs", 0), ("max_power", -1.0), ("penalty_factor", 1.0),
                                       ("penalty_init", 0.0), ("num_users", 2.5), ("bogus", 1),
                                       ("edge_slope", [1.0, 2.0])])
def test_invalid_fields_named(key, value):
    with pytest.raises(ConfigError) as exc:
        validate_config(profile="desk", **{key: value})
    assert exc.value.field == key


def test_config_file_round_trip(tmp_path):
    cfg = validate_config(profile="desk", seed=7)
    dump_config(cfg, tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again.seed == 7
    np.testing.assert_array_equal(again.storage, cfg.storage)
    np.testing.assert_array_equal(again.sinr_target, cfg.sinr_target)


def test_replace_keeps_invariants():
    cfg = validate_config(profile="desk").replace(fractional_capacity=0.6)
    assert cfg.fractional_capacity == 0.6
    np.testing.assert_allclose(cfg.storage, 0.6 * cfg.library_size)
    assert cfg.replace(num_users=8).noise_power.shape == (8,)


def test_config_is_immutable():
    cfg = validate_config(profile="desk")
    with pytest.raises(ValueError):
        cfg.max_power[0] = 1.0


@given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_request_groups_partition(assignment):
    r = RequestSlot(tuple(assignment))
    members = sorted(k for g in r.groups.values() for k in g)
    assert members == list(range(len(assignment)))
    assert set(r.requested) == set(assignment)
    for f, g in r.groups.items():
        assert all(assignment[k] == f for k in g)


def test_cache_allocation_check():
    cfg = validate_config(profile="desk", fractional_capacity=0.2)
    CacheAllocation(np.full((10, 3), 0.2)).check(cfg)
    with pytest.raises(ValueError):
        CacheAllocation(np.full((10, 3), 0.3)).check(cfg)
    with pytest.raises(ValueError):
        CacheAllocation(np.full((10, 3), -0.1)).check(cfg)


def test_power_breakdown_total():
    p = PowerBreakdown(1.5, 2.0)
    assert p.total == 3.5 and math.isclose(p.total, p.edge + p.fronthaul)
