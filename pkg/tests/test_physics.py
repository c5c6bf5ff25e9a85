import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscn.model import RequestSlot
from cscn.physics import fronthaul_cost, fronthaul_rate, per_sbs_power, qos_satisfied, sinr, total_power
from conftest import unit_config


def _one(x):
    return np.array(x, dtype=complex).reshape(-1, 1, 1)


def test_sinr_examples():
    H = _one([1.0])
    assert sinr(0, 0, _one([2.0]), H, 1.0) == pytest.approx(4.0)
    assert sinr(0, 0, _one([2.0, 1.0]), H, 1.0) == pytest.approx(2.0)
    assert sinr(0, 0, _one([0.0]), H, 1.0) == 0.0
    with pytest.raises(IndexError):
        sinr(1, 0, _one([1.0]), H, 1.0)


@given(st.integers(0, 2 ** 32 - 1))
def test_sinr_phase_invariant(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
    V = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
    W = V * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(2, 1, 1)))
    for k in range(3):
        assert sinr(k, 0, W, H, 0.3) == pytest.approx(sinr(k, 0, V, H, 0.3), rel=1e-10)


def test_qos_examples():
    cfg = unit_config(num_users=2)
    r = RequestSlot((0, 0))
    H = np.ones((2, 1, 1), dtype=complex)
    ok, worst = qos_satisfied(np.zeros((1, 1, 1), dtype=complex), np.ones((1, 1)), r, H, cfg)
    assert not ok and worst == pytest.approx(-1.0)
    ok, _ = qos_satisfied(np.full((1, 1, 1), 2.0 + 0j), np.ones((1, 1)), r, H, cfg)
    assert ok
    vac = unit_config(num_users=2, sinr_target=0.0)
    assert qos_satisfied(np.full((1, 1, 1), 0.5 + 0j), np.ones((1, 1)), r, H, vac)[0]


def test_qos_caps_and_zeroing():
    cfg = unit_config(max_power=1.0)
    r = RequestSlot((0,))
    H = np.ones((1, 1, 1), dtype=complex)
    assert not qos_satisfied(np.full((1, 1, 1), 2.0 + 0j), np.ones((1, 1)), r, H, cfg)[0]  # cap
    ok, worst = qos_satisfied(np.full((1, 1, 1), 1.0 + 0j), np.zeros((1, 1)), r, H,
                              unit_config(sinr_target=0.5))
    assert not ok and worst == -np.inf


def test_fronthaul_rate_examples():
    assert fronthaul_rate(np.array([0.5, 1.0]), np.array([1, 1]), 10.0) == pytest.approx(5.0)
    assert fronthaul_rate(np.array([0.2, 0.3]), np.zeros(2), 10.0) == 0.0
    assert fronthaul_rate(np.ones(3), np.ones(3), 7.0) == 0.0


def test_total_power_examples():
    cfg = unit_config(edge_slope=4.0)
    V = np.full((1, 1, 1), np.sqrt(2.0) + 0j)
    p = total_power(np.zeros((1, 1)), V, np.zeros((1, 1)), (0,), cfg)
    assert (p.edge, p.fronthaul) == (pytest.approx(8.0), 0.0)
    p = total_power(np.zeros((1, 1)), np.zeros((1, 1, 1), dtype=complex), np.zeros((1, 1)), (0,), cfg)
    assert p.total == 0.0
    cfg = unit_config(bandwidth=1e7, sinr_target=3.1623, fronthaul_efficiency=1e-7)
    p = total_power(np.zeros((1, 1)), np.zeros((1, 1, 1), dtype=complex), np.ones((1, 1)), (0,), cfg)
    assert p.fronthaul == pytest.approx(2.056, rel=1e-3)


@given(st.integers(0, 2 ** 32 - 1))
def test_power_monotone_in_cache(seed):
    rng = np.random.default_rng(seed)
    cfg = unit_config(num_sbs=3, num_files=4, num_antennas=2, fractional_capacity=0.5)
    L = rng.uniform(size=(4, 3))
    V = rng.standard_normal((2, 3, 2)) + 0j
    E = rng.integers(0, 2, size=(2, 3)).astype(float)
    base = total_power(L, V, E, (1, 3), cfg).total
    f, b = rng.integers(4), rng.integers(3)
    L2 = L.copy()
    L2[f, b] = min(1.0, L2[f, b] + rng.uniform())
    assert total_power(L2, V, E, (1, 3), cfg).total <= base + 1e-15
    assert total_power(np.ones((4, 3)), V, E, (1, 3), cfg).fronthaul == 0.0
    np.testing.assert_array_equal(fronthaul_cost(np.ones((4, 3)), (0, 2), cfg), 0.0)


def test_per_sbs_power():
    V = np.zeros((2, 2, 1), dtype=complex)
    V[0, 0] = 1.0
    V[1, 0] = 2.0j
    V[1, 1] = 3.0
    np.testing.assert_allclose(per_sbs_power(V), [5.0, 9.0])
