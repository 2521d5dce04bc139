"""Water-filling power allocation and OFDM capacity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SubcarrierChannel


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray
    water_level: float
    power_per_subcarrier: float
    degenerate: bool = False


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    per_subcarrier_rate: np.ndarray
    gains: np.ndarray
    allocation: PowerAllocation


def waterfill(gains, power: float, noise: float, rtol: float = 1e-12) -> PowerAllocation:
    """Allocate ``power * S`` over ``S`` subcarriers with gains ``g``.

    ``q_nu = max(mu - noise / g_nu, 0)``; the water level ``mu`` is found by
    bisection. Zero-gain subcarriers get no power. If all gains vanish the
    allocation is all zeros and flagged ``degenerate``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")
    if power <= 0:
        raise ValueError("power must be positive")
    budget = power * g.size
    active = g > 0
    if not np.any(active):
        return PowerAllocation(np.zeros(g.size), 0.0, power, degenerate=True)
    floors = noise / g[active]

    def used(mu):
        return np.sum(np.maximum(mu - floors, 0.0))

    lo = float(floors.min())
    hi = lo + budget
    while used(hi) < budget:
        hi = lo + 2 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if used(mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    # exact water level for the identified active set, measured from the
    # lowest floor so that q does not cancel against a large common offset
    on = floors < 0.5 * (lo + hi)
    base = floors.min()
    excess = floors - base
    level = (budget + excess[on].sum()) / on.sum()
    q = np.zeros(g.size)
    q[active] = np.maximum(level - excess, 0.0)
    return PowerAllocation(q, float(base + level), power)


def rates(gains, allocation: PowerAllocation, noise: float) -> np.ndarray:
    return np.log2(1.0 + allocation.powers * np.asarray(gains) / noise)


def capacity(psi: np.ndarray, chan: SubcarrierChannel, bandwidth: float, num_taps: int,
             power: float, noise: float) -> CapacityResult:
    """Capacity ``B/(T+S) sum log2(1 + q_nu g_nu / N0)`` in bit/s with water-filling."""
    g = chan.gains(psi)
    alloc = waterfill(g, power, noise)
    r = rates(g, alloc, noise)
    prefactor = bandwidth / (num_taps + chan.num_subcarriers)
    return CapacityResult(float(prefactor * r.sum()), prefactor * r, g, alloc)
