import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscn.scenario import (Geometry, Purpose, Scenario, build_popularity, in_hexagon, path_loss_db, place_nodes,
                           sample_channels, sample_requests, stream, zipf_probs, PopularityProfile)
from cscn.model import validate_config


def test_zipf_example():
    c, p = zipf_probs(1.0, np.array([1, 2, 3]))
    np.testing.assert_allclose(p, [6 / 11, 3 / 11, 2 / 11], rtol=1e-12)
    assert c == pytest.approx(1 / (1 + 1 / 2 + 1 / 3))


@given(st.integers(1, 30))
def test_zipf_zero_skew_uniform(F):
    _, p = zipf_probs(0.0, np.arange(1, F + 1))
    np.testing.assert_allclose(p, 1.0 / F)


def test_single_file():
    _, p = zipf_probs(1.7, np.array([1]))
    assert p.tolist() == [1.0]


@given(st.integers(0, 1000), st.integers(1, 5), st.integers(1, 20))
def test_popularity_invariants(seed, I, F):
    cfg = validate_config(profile="desk", seed=seed, patterns=I, num_files=F)
    prof = build_popularity(cfg)
    np.testing.assert_allclose(prof.probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(prof.probs > 0)
    assert np.all((prof.skewness >= 1.0) & (prof.skewness <= 2.0))
    for i in range(I):
        assert sorted(prof.ranks[i]) == list(range(1, F + 1))
        assert np.array_equal(prof.probs[i], prof.norm[i] * prof.ranks[i].astype(float) ** -prof.skewness[i])
    counts = np.bincount(prof.user_pattern, minlength=I)
    assert counts.max() - counts.min() <= 1


def _degenerate(K, F, favourite):
    probs = np.zeros((1, F))
    probs[0, favourite] = 1.0
    return PopularityProfile(np.ones(1), np.arange(1, F + 1)[None], np.ones(1), probs, np.zeros(K, dtype=int))


def test_degenerate_requests_one_group():
    r = sample_requests(_degenerate(2, 5, 0), 0, np.random.default_rng(0))
    assert r.groups == {0: (0, 1)}


def test_distinct_requests_singletons():
    probs = np.eye(4)
    prof = PopularityProfile(np.ones(4), np.tile(np.arange(1, 5), (4, 1)), np.ones(4), probs, np.arange(4))
    r = sample_requests(prof, 0, np.random.default_rng(0))
    assert r.num_requested == 4 and all(len(g) == 1 for g in r.groups.values())


def test_requests_deterministic_and_order_free():
    cfg = validate_config(profile="desk", seed=3)
    a, b = Scenario(cfg), Scenario(cfg)
    later = b.requests(2, 5)
    _ = [a.requests(0, t) for t in range(5)]
    assert a.requests(2, 5) == later


def test_geometry_constraints():
    for seed in range(5):
        cfg = validate_config(profile="paper", seed=seed)
        g = place_nodes(cfg)
        assert np.all(g.distances() >= 0.03)
        assert np.all(in_hexagon(g.sbs_xy, 1.0)) and np.all(in_hexagon(g.user_xy, 1.0))
        np.testing.assert_array_equal(place_nodes(cfg).user_xy, g.user_xy)


def test_hexagon_membership():
    assert in_hexagon(np.array([0.99, 0.0]), 1.0)
    assert not in_hexagon(np.array([0.0, 0.9]), 1.0)  # apothem is sqrt(3)/2
    assert in_hexagon(np.array([0.0, 0.86]), 1.0)


def test_geometry_dump(tmp_path):
    g = place_nodes(validate_config(profile="desk"))
    g.dump(tmp_path / "g.json")
    h = Geometry.load(tmp_path / "g.json")
    np.testing.assert_array_equal(h.sbs_xy, g.sbs_xy)


def test_path_loss_examples():
    assert path_loss_db(0.1) == pytest.approx(110.5)
    assert path_loss_db(1.0) == pytest.approx(148.1)


def test_channels_large_scale_fixed_in_block():
    cfg = validate_config(profile="desk", seed=1)
    sc = Scenario(cfg)
    blk = sc.channels(0)
    assert blk.gains.shape == (cfg.block_length, cfg.num_users, cfg.num_sbs, cfg.num_antennas)
    np.testing.assert_array_equal(blk.large_scale, sc.channels(4).large_scale)
    assert blk.integrated(0, 1).shape == (cfg.num_sbs * cfg.num_antennas,)
    np.testing.assert_array_equal(sc.channels(0).gains, blk.gains)


def test_no_gain_no_shadow_matches_path_loss():
    cfg = validate_config(profile="desk", antenna_gain_db=0.0, shadowing_std_db=0.0)
    g = Geometry(np.zeros((1, 2)), np.array([[0.1, 0.0]]))
    from cscn.scenario import large_scale_gains
    gain = large_scale_gains(g, cfg)
    assert -10 * math.log10(gain[0, 0]) == pytest.approx(110.5)


def test_stream_independence():
    a = stream(0, Purpose.REQUESTS, 1, 2).random(4)
    b = stream(0, Purpose.REQUESTS, 1, 3).random(4)
    c = stream(0, Purpose.SMALL_SCALE, 1, 2).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    np.testing.assert_array_equal(a, stream(0, Purpose.REQUESTS, 1, 2).random(4))
