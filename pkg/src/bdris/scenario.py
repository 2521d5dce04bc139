"""Random multipath realizations for the TX -> RIS -> RX geometry.

A reduced cluster model stands in for the full 3GPP spatial channel model:
every RIS link has one geometric line-of-sight path (when the Rician factor
is positive) plus scattered paths with exponential excess delays, an
exponential power-delay profile with log-normal shadowing, and uniform
angles around broadside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf

import numpy as np
from scipy.constants import speed_of_light

from .channel import Path, PathSet

LOS_ONLY_KAPPA = 1e6


def free_space_gain(distance: float, carrier_freq: float) -> float:
    """Friis amplitude gain ``lambda / (4 pi d)`` with unit antenna gains."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return speed_of_light / carrier_freq / (4 * np.pi * distance)


def _angles_towards(vector: np.ndarray) -> tuple[float, float]:
    """Path angles of a far end in direction ``vector`` from the surface."""
    x, y, z = vector / np.linalg.norm(vector)
    az = np.arctan2(y, x)
    el = np.arcsin(np.clip(z, -1.0, 1.0))
    # element delay offsets use +(p_n - p_1).u / c, so the geometric direction is mirrored
    return -float(az), -float(el)


@dataclass(frozen=True)
class ScenarioConfig:
    tx_position: tuple[float, float, float] = (40.0, -40.0, 0.0)
    rx_position: tuple[float, float, float] = (20.0, 0.0, 0.0)
    ris_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    carrier_freq: float = 3e9
    rows: int = 8
    cols: int = 8
    element_spacing: float | None = None
    num_tx_paths: int = 6
    num_rx_paths: int = 6
    num_static_paths: int = 0
    rician_kappa: float = 0.0
    static_gain_offset_db: float = -40.0
    delay_spread: float = 100e-9
    angular_spread: float = np.pi / 3
    shadowing_db: float = 3.0
    master_seed: int = 0

    def __post_init__(self):
        pts = [np.asarray(p, float) for p in (self.tx_position, self.rx_position, self.ris_center)]
        if any(p.shape != (3,) for p in pts):
            raise ValueError("positions must be 3-vectors")
        if (np.allclose(pts[0], pts[1]) or np.allclose(pts[0], pts[2])
                or np.allclose(pts[1], pts[2])):
            raise ValueError("TX, RX and RIS positions must be distinct")
        if pts[0][0] <= pts[2][0] or pts[1][0] <= pts[2][0]:
            raise ValueError("TX and RX must be in front of the RIS (larger x than its center)")
        if self.num_tx_paths < 1 or self.num_rx_paths < 1:
            raise ValueError("RIS links need at least one path each")
        if self.num_static_paths < 0:
            raise ValueError("num_static_paths must be >= 0")
        if not self.rician_kappa >= 0:
            raise ValueError(f"rician_kappa must be >= 0, got {self.rician_kappa}")
        if self.delay_spread <= 0:
            raise ValueError("delay_spread must be positive")
        if not 0 < self.angular_spread < np.pi / 2:
            raise ValueError("angular_spread must lie in (0, pi/2)")

    @property
    def los_only(self) -> bool:
        return self.rician_kappa == inf or self.rician_kappa >= LOS_ONLY_KAPPA

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.carrier_freq

    @property
    def spacing(self) -> float:
        return self.element_spacing if self.element_spacing is not None else self.wavelength / 4

    def realization_seed(self, index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([int(self.master_seed) & (2**64 - 1), int(index)])


@dataclass(frozen=True)
class Realization:
    paths: PathSet
    seed: int
    index: int = 0
    meta: dict = field(default_factory=dict, compare=False)


def _scattered_powers(excess: np.ndarray, cfg: ScenarioConfig, rng) -> np.ndarray:
    shadow = 10 ** (-cfg.shadowing_db * rng.standard_normal(excess.size) / 10)
    w = np.exp(-excess / cfg.delay_spread) * shadow
    return w / w.sum()


def _ris_link(far_end: np.ndarray, cfg: ScenarioConfig, num_paths: int, rng) -> list[Path]:
    center = np.asarray(cfg.ris_center, float)
    dist = float(np.linalg.norm(far_end - center))
    los_delay = dist / speed_of_light
    link_power = free_space_gain(dist, cfg.carrier_freq) ** 2
    kappa = cfg.rician_kappa
    paths = []
    if cfg.los_only:
        az, el = _angles_towards(far_end - center)
        return [Path(np.sqrt(link_power), los_delay, az, el)]
    num_scattered = num_paths
    scattered_share = 1.0
    if kappa > 0:
        if num_paths < 2:
            raise ValueError("a finite positive Rician factor needs at least two paths per link")
        az, el = _angles_towards(far_end - center)
        paths.append(Path(np.sqrt(link_power * kappa / (kappa + 1)), los_delay, az, el))
        num_scattered -= 1
        scattered_share = 1.0 / (kappa + 1)
    excess = rng.exponential(cfg.delay_spread, num_scattered)
    powers = _scattered_powers(excess, cfg, rng) * scattered_share * link_power
    az = rng.uniform(-cfg.angular_spread, cfg.angular_spread, num_scattered)
    el = rng.uniform(-cfg.angular_spread, cfg.angular_spread, num_scattered)
    for k in range(num_scattered):
        paths.append(Path(float(np.sqrt(powers[k])), los_delay + float(excess[k]),
                          float(az[k]), float(el[k])))
    return paths


def static_reference_gain(cfg: ScenarioConfig) -> float:
    """Free-space amplitude of the direct TX -> RX distance."""
    d = np.linalg.norm(np.subtract(cfg.rx_position, cfg.tx_position))
    return free_space_gain(float(d), cfg.carrier_freq)


def generate(cfg: ScenarioConfig, index: int) -> Realization:
    """Realization ``index`` of the scenario; deterministic in ``(cfg, index)``."""
    seq = cfg.realization_seed(index)
    rng = np.random.default_rng(seq)
    tx = np.asarray(cfg.tx_position, float)
    rx = np.asarray(cfg.rx_position, float)
    tx_paths = _ris_link(tx, cfg, cfg.num_tx_paths, rng)
    rx_paths = _ris_link(rx, cfg, cfg.num_rx_paths, rng)

    static_paths = []
    if cfg.num_static_paths > 0:
        d = float(np.linalg.norm(rx - tx))
        power = static_reference_gain(cfg) ** 2 * 10 ** (cfg.static_gain_offset_db / 10)
        excess = rng.exponential(cfg.delay_spread, cfg.num_static_paths)
        powers = _scattered_powers(excess, cfg, rng) * power
        static_paths = [Path(float(np.sqrt(p)), d / speed_of_light + float(e))
                        for p, e in zip(powers, excess)]
    seed = int(seq.generate_state(2, np.uint32).view(np.uint64)[0])
    return Realization(PathSet(static_paths, tx_paths, rx_paths), seed, index)
