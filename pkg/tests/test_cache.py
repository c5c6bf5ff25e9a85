import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscn.cache import (alternating_update, cache_weights, knapsack_column, read_allocation, solve_cache_lp,
                        write_allocation)
from cscn.model import CacheAllocation, validate_config
from cscn.scenario import Scenario
from conftest import unit_config


def test_weights_examples():
    cfg = validate_config(profile="desk", num_files=1, num_sbs=1, sinr_target=3.1623, bandwidth=1e7,
                          fronthaul_efficiency=1e-7)
    Es = [np.ones((1, 1)) if t < 3 else np.zeros((1, 1)) for t in range(10)]
    assert cache_weights(Es, cfg)[0, 0] == pytest.approx(6.17, abs=0.01)
    assert cache_weights([np.zeros((1, 1))] * 10, cfg)[0, 0] == 0.0
    w = cache_weights([np.ones((1, 1))] * 10, cfg)[0, 0]
    assert w == pytest.approx(1e-7 * cfg.rates[0] * 10, rel=1e-12)


def test_knapsack_examples():
    np.testing.assert_array_equal(knapsack_column(np.array([3.0, 1.0, 2.0]), np.array([1.0, 1.0, 2.0]), 2.0),
                                  [1.0, 1.0, 0.0])
    np.testing.assert_allclose(knapsack_column(np.array([2.0, 1.0]), np.array([1.0, 1.0]), 1.5), [1.0, 0.5])
    np.testing.assert_array_equal(knapsack_column(np.array([0.0, 5.0, 1.0]), np.ones(3), 3.0), [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(knapsack_column(np.array([1.0, 2.0]), np.ones(2), 0.0), [0.0, 0.0])


def lp_vertices(sizes, capacity):
    """Every vertex of {0 <= l <= 1, sizes . l <= capacity}."""
    n = len(sizes)
    out = []
    for bits in itertools.product((0.0, 1.0), repeat=n):
        l = np.array(bits)
        if sizes @ l <= capacity + 1e-12:
            out.append(l)
        for i in range(n):  # one free coordinate on the capacity face
            rest = sizes @ l - sizes[i] * l[i]
            x = (capacity - rest) / sizes[i]
            if 0.0 < x < 1.0:
                m = l.copy()
                m[i] = x
                out.append(m)
    return out


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_greedy_matches_vertex_enumeration(seed, F):
    rng = np.random.default_rng(seed)
    sizes = rng.uniform(0.5, 2.0, F)
    w = rng.uniform(0, 3, F) * (rng.uniform(size=F) > 0.2)
    cap = rng.uniform(0, sizes.sum() * 1.1)
    l = knapsack_column(w, sizes, cap)
    best = max(w @ v for v in lp_vertices(sizes, cap))
    assert w @ l == pytest.approx(best, rel=1e-9, abs=1e-12)
    assert np.sum((l > 0) & (l < 1)) <= 1
    assert np.all((l >= 0) & (l <= 1)) and sizes @ l <= cap * (1 + 1e-12) + 1e-12


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
def test_lp_feasible_and_tight(seed, mu):
    rng = np.random.default_rng(seed)
    cfg = validate_config(profile="desk", fractional_capacity=mu)
    w = rng.uniform(0, 1, (cfg.num_files, cfg.num_sbs))
    L = solve_cache_lp(w, cfg)
    L.check(cfg)
    used = cfg.file_sizes @ L.fractions
    full = np.all(L.fractions[w > 0] == 1.0, axis=0) if np.any(w > 0) else True
    assert np.all(np.isclose(used, cfg.storage, rtol=1e-12) | full)
    assert np.all(np.sum((L.fractions > 0) & (L.fractions < 1), axis=0) <= 1)


def test_lp_rejects_bad_weights():
    cfg = validate_config(profile="desk")
    with pytest.raises(ValueError):
        solve_cache_lp(-np.ones((cfg.num_files, cfg.num_sbs)), cfg)
    with pytest.raises(ValueError):
        solve_cache_lp(np.ones((2, 2)), cfg)


def test_lp_step_never_increases_objective():
    rng = np.random.default_rng(0)
    cfg = validate_config(profile="desk", fractional_capacity=0.4)
    Es = [rng.integers(0, 2, (cfg.num_files, cfg.num_sbs)) for _ in range(8)]
    w = cache_weights(Es, cfg)
    L0 = np.full((cfg.num_files, cfg.num_sbs), 0.4)
    L1 = solve_cache_lp(w, cfg).fractions
    cost = lambda L: float(np.sum(w * (1 - L)))
    assert cost(L1) <= cost(L0) + 1e-12


def test_single_file_cached_in_one_pass():
    cfg = unit_config(block_length=3, fractional_capacity=1.0, noise_power=1e-12)
    window = Scenario(cfg).window(0)
    out = alternating_update(window, np.zeros((1, 1)), cfg)
    assert out.allocation.fractions.tolist() == [[1.0]]
    assert out.trace[0].iteration == 0 and len(out.trace) == 2
    assert out.objective <= out.trace[0].objective


def test_empty_cache_stays_empty(desk):
    cfg = desk.replace(fractional_capacity=0.0, block_length=3)
    out = alternating_update(Scenario(cfg).window(0), np.zeros((cfg.num_files, cfg.num_sbs)), cfg)
    assert np.all(out.allocation.fractions == 0.0)


def test_outer_trace_non_increasing(desk):
    cfg = desk.replace(fractional_capacity=0.4, block_length=6)
    out = alternating_update(Scenario(cfg).window(0), np.full((cfg.num_files, cfg.num_sbs), 0.4), cfg)
    objs = [s.objective for s in out.trace if s.infeasible == out.trace[0].infeasible]
    assert all(b <= a * (1 + 1e-3) for a, b in zip(objs, objs[1:]))
    out.allocation.check(cfg)


def test_allocation_csv_round_trip(tmp_path, desk):
    L = np.random.default_rng(1).uniform(size=(desk.num_files, desk.num_sbs))
    write_allocation(CacheAllocation(L), tmp_path / "L.csv")
    np.testing.assert_array_equal(read_allocation(tmp_path / "L.csv", desk).fractions, L)
