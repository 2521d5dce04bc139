import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdris.capacity import capacity, rates, waterfill
from bdris.channel import SubcarrierChannel
from conftest import random_factored_channel


def check_kkt(g, alloc, power, noise, tol=1e-9):
    q, mu = alloc.powers, alloc.water_level
    budget = power * g.size
    assert abs(q.sum() - budget) <= tol * budget
    assert np.all(q >= 0)
    on = q > 0
    assert np.all(np.abs(mu - noise / g[on] - q[on]) <= tol * mu)
    off = ~on & (g > 0)
    assert np.all(mu <= noise / g[off] * (1 + tol))
    assert np.all(q[g == 0] == 0)


def test_hand_case():
    alloc = waterfill([1.0, 0.5], 1.0, 1.0)
    assert alloc.water_level == 2.5
    np.testing.assert_array_equal(alloc.powers, [1.5, 0.5])


def test_equal_gains():
    alloc = waterfill(np.full(7, 0.3), 2.0, 0.6)
    np.testing.assert_allclose(alloc.powers, 2.0, rtol=1e-12)
    assert alloc.water_level == pytest.approx(2.0 + 0.6 / 0.3)


def test_zero_gain_excluded():
    alloc = waterfill([1e9, 0.0], 1.0, 1.0)
    np.testing.assert_allclose(alloc.powers, [2.0, 0.0])


def test_all_zero_gains_degenerate():
    alloc = waterfill(np.zeros(4), 1.0, 1.0)
    assert alloc.degenerate
    assert np.all(alloc.powers == 0)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        waterfill([-1.0, 1.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        waterfill([1.0], 0.0, 1.0)


@settings(deadline=None, max_examples=200)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(1, 300),
       spread=st.floats(0, 12), power=st.floats(1e-3, 1e3), noise=st.floats(1e-3, 1e3))
def test_kkt_random(seed, s, spread, power, noise):
    rng = np.random.default_rng(seed)
    g = 10.0 ** rng.uniform(-spread, 0, s)
    g[rng.random(s) < 0.1] = 0.0
    alloc = waterfill(g, power, noise)
    if not np.any(g > 0):
        assert alloc.degenerate
        return
    check_kkt(g, alloc, power, noise)


def test_beats_equal_power(rng):
    for _ in range(100):
        g = rng.exponential(1.0, 64)
        alloc = waterfill(g, 0.5, 1.0)
        equal = np.log2(1 + 0.5 * g).sum()
        assert rates(g, alloc, 1.0).sum() >= equal - 1e-12


def test_rate_monotone_in_each_gain(rng):
    for _ in range(50):
        g = rng.exponential(1.0, 16)
        base = rates(g, waterfill(g, 1.0, 1.0), 1.0).sum()
        k = rng.integers(16)
        g2 = g.copy()
        g2[k] *= 1 + rng.uniform(0.01, 1)
        assert rates(g2, waterfill(g2, 1.0, 1.0), 1.0).sum() >= base - 1e-12


def test_single_carrier_capacity():
    ch = SubcarrierChannel.from_matrices(np.array([2.0 + 0j]), np.zeros((1, 1, 1)))
    res = capacity(np.eye(1), ch, 1e6, 0, 3.0, 0.5)
    assert res.capacity == pytest.approx(1e6 * np.log2(1 + 3.0 * 4.0 / 0.5), rel=1e-14)


def test_zero_channel_capacity():
    ch = SubcarrierChannel.from_matrices(np.zeros(8), np.zeros((8, 2, 2)))
    res = capacity(np.eye(2), ch, 1e6, 3, 1.0, 1.0)
    assert res.capacity == 0.0
    assert res.allocation.degenerate


def test_capacity_formula_reevaluation(rng):
    ch = random_factored_channel(rng, 4, 32)
    psi = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    psi = psi @ psi.T
    res = capacity(psi, ch, 20e6, 5, 2.0, 0.7)
    total = 0.0
    for nu in range(32):
        g = abs(ch.static[nu] + np.trace(psi @ ch.matrices[nu])) ** 2
        total += np.log2(1 + res.allocation.powers[nu] * g / 0.7)
    assert res.capacity == pytest.approx(20e6 / 37 * total, rel=1e-12)
