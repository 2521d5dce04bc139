"""Comparison schemes: conventional diagonal RIS, strongest-tap BD-RIS and random BD-RIS."""

from __future__ import annotations

import numpy as np

from .channel import QuadraticAggregates, SubcarrierChannel, TapSet, per_tap_matrices, unvec, vec
from .solver import phase_power_iteration, project_symmetric_unitary, refine_diagonal, \
    refinement_matrix, solve_relaxed


def diagonal_power_iteration(chan: SubcarrierChannel, iterations: int = 100) -> np.ndarray:
    """Optimized conventional RIS: unit-modulus diagonal ``Psi``."""
    abar = refinement_matrix(chan.static, chan.diagonals())
    d, _ = phase_power_iteration(abar, iterations)
    return np.diag(d[1:])


def rank_one_symmetric_unitary(h: np.ndarray) -> np.ndarray:
    """Symmetric unitary ``Psi`` maximizing ``|tr(Psi h)|`` for a rank-one ``h``.

    Solves the single-matrix relaxed problem (``b = 0``) and projects it; for
    ``h = sigma u v^T`` this reaches the bound ``|tr(Psi h)| = sigma``.
    """
    n = h.shape[0]
    hv = vec(h)
    norm = np.linalg.norm(hv)
    if norm == 0:
        return np.eye(n, dtype=complex)
    agg = QuadraticAggregates(hv[None, :], np.zeros(n * n, dtype=complex), 0.0)
    relaxed = solve_relaxed(agg, n)
    psi, _ = project_symmetric_unitary(unvec(relaxed.psi, n))
    return psi


def strongest_tap(taps: TapSet, chan: SubcarrierChannel,
                  return_tap: bool = False):
    """Optimize for the principal rank-one component of each tap, keep the strongest.

    Every tap's cascaded matrix ``H^(l)`` is reduced to ``sigma_1 u v^T``; the
    matching symmetric unitary ``Psi_l`` is scored by ``|tr(Psi_l H^(l))|^2``
    and the best-scoring one is returned.
    """
    mats = per_tap_matrices(taps, chan.incident, chan.outgoing)
    best, best_power, best_tap = None, -1.0, -1
    for ell, h in enumerate(mats):
        u, s, vh = np.linalg.svd(h)
        if s[0] == 0:
            continue
        principal = s[0] * np.outer(u[:, 0], vh[0])
        psi = rank_one_symmetric_unitary(principal)
        power = abs(np.trace(psi @ h)) ** 2
        if power > best_power:
            best, best_power, best_tap = psi, power, ell
    if best is None:
        best = np.eye(chan.num_elements, dtype=complex)
        best_tap = 0
    if return_tap:
        return best, best_tap, best_power
    return best


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph[None, :]


def random_bd(chan: SubcarrierChannel, seed, iterations: int = 100) -> np.ndarray:
    """Random ``S`` with power-iteration-refined ``D``: ``Psi = S D S^T``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = random_unitary(chan.num_elements, rng)
    d, _ = refine_diagonal(s, chan, iterations)
    psi = s @ (d[1:, None] * s.T)
    return (psi + psi.T) / 2
