"""Symmetric-unitary reflection-matrix optimization.

The pipeline maximizes the total channel gain over all subcarriers:

1. solve the norm-relaxed quadratic problem (trust-region subproblem with an
   equality constraint) through its secular equation,
2. project the reshaped solution onto the symmetric unitary matrices with a
   Takagi factorization, ``Psi = S S^T``,
3. refine ``Psi = S D S^T`` over the diagonal phases ``D`` by an anchored,
   phase-projected power iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import QuadraticAggregates, SubcarrierChannel, aggregate_quadratic, unvec

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a numerical stage fails its own accuracy check."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of ``A`` restricted to the directions that matter for ``b``.

    ``vectors[:, d]`` is the eigenvector for ``values[d]`` (descending).
    """

    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class TakagiFactors:
    S: np.ndarray
    sigma: np.ndarray


@dataclass
class RelaxedSolution:
    psi: np.ndarray
    gamma: float
    hard_case: bool = False
    zero_b: bool = False


@dataclass
class Diagnostics:
    """Per-stage objective values of one optimization run (total gains)."""

    relaxed: float = float("nan")
    projected: float = float("nan")
    refined: float = float("nan")
    hard_case: bool = False
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"relaxed": self.relaxed, "projected": self.projected,
                "refined": self.refined, "hard_case": int(self.hard_case),
                "iterations": self.iterations}


# -- relaxed problem ---------------------------------------------------------

def eigensystem(agg: QuadraticAggregates) -> EigenSystem:
    """Eigenpairs of ``A = R^H R`` from a thin SVD of the root.

    The part of ``b`` outside the range of ``A`` is appended as one extra
    eigenvector with eigenvalue 0, which is all the secular formula needs
    from the null space.
    """
    b = agg.b
    root = agg.root
    if root.shape[0]:
        _, s, vh = np.linalg.svd(root, full_matrices=False)
        keep = s > s[0] * 1e-13 if s.size and s[0] > 0 else np.zeros(s.size, bool)
        values = s[keep] ** 2
        vectors = vh[keep].conj().T
    else:
        values = np.zeros(0)
        vectors = np.zeros((b.size, 0), dtype=complex)
    resid = b - vectors @ (vectors.conj().T @ b)
    nb = np.linalg.norm(b)
    if nb > 0 and np.linalg.norm(resid) > 1e-13 * nb:
        # one re-orthogonalization pass keeps the extra vector orthonormal
        resid -= vectors @ (vectors.conj().T @ resid)
        values = np.append(values, 0.0)
        vectors = np.column_stack([vectors, resid / np.linalg.norm(resid)])
    if values.size == 0:
        vectors = np.zeros((b.size, 1), dtype=complex)
        vectors[0, 0] = 1.0
        values = np.zeros(1)
    return EigenSystem(values, vectors)


def secular_function(gamma: float, eigenvalues, projections) -> float:
    lam = np.asarray(eigenvalues, dtype=float)
    p = np.abs(np.asarray(projections))
    return float(np.sum(p ** 2 / (gamma - lam) ** 2))


class HardCase(Exception):
    """No root of the secular equation above the largest eigenvalue."""


def _dominant_mask(lam: np.ndarray) -> np.ndarray:
    lmax = lam.max()
    return lam >= lmax - 1e-12 * max(abs(lmax), 1.0)


def secular_root(eigenvalues, projections, norm_sq: float) -> float:
    """Root ``gamma > max(eigenvalues)`` of ``sum |p_d|^2 / (gamma - lambda_d)^2 = norm_sq``.

    Solved for the shift ``t = gamma - max(lambda)`` so that the distances
    ``gamma - lambda_d`` never lose precision to cancellation, with Brent's
    method on the bracket ``(0, ||p|| / sqrt(norm_sq)]``. Raises
    :class:`HardCase` when the projections onto the dominant eigenspace
    vanish and the remaining terms cannot reach ``norm_sq``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    p2 = np.abs(np.asarray(projections)) ** 2
    if not np.any(p2 > 0):
        raise ValueError("at least one projection must be nonzero")
    lmax = lam.max()
    gaps = lmax - lam
    dom = _dominant_mask(lam)
    pnorm = np.sqrt(p2.sum())
    if np.sqrt(p2[dom].sum()) <= 1e-14 * pnorm:
        rest = np.sum(p2[~dom] / gaps[~dom] ** 2) if np.any(~dom) else 0.0
        if rest <= norm_sq:
            raise HardCase
        p2 = np.where(dom, 0.0, p2)

    def phi(t):
        # 1/sqrt(f) - 1/sqrt(N): increasing in t and close to linear
        f = np.sum(p2 / (t + gaps) ** 2)
        return 1.0 / np.sqrt(f) - 1.0 / np.sqrt(norm_sq)

    hi = pnorm / np.sqrt(norm_sq)
    if phi(hi) < 0:  # rounding at the Cauchy-Schwarz endpoint
        hi *= 1 + 1e-12
    lo = hi
    while phi(lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            raise SolverError("secular bracket collapsed")
    t = brentq(phi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500) \
        if phi(lo) < 0 else lo
    return float(lmax + t)


def solve_relaxed(agg: QuadraticAggregates, norm_sq: float) -> RelaxedSolution:
    """Maximize ``psi^H A psi + 2 Re(psi^H b)`` subject to ``||psi||^2 = norm_sq``."""
    eig = eigensystem(agg)
    lam, u = eig.values, eig.vectors
    lmax = lam.max()
    dom = _dominant_mask(lam)
    b = agg.b
    a_scale = np.sqrt(np.sum(lam ** 2))  # ||A||_F
    if np.linalg.norm(b) < 1e-12 * a_scale * np.sqrt(norm_sq) or not np.any(b):
        k = int(np.argmax(lam))
        return RelaxedSolution(np.sqrt(norm_sq) * u[:, k], float(lmax), zero_b=True)

    proj = u.conj().T @ b
    try:
        gamma = secular_root(lam, proj, norm_sq)
    except HardCase:
        # b is orthogonal to the dominant eigenspace: take the limit gamma ->
        # lambda_max and fill the missing norm along a dominant eigenvector
        gaps = lmax - lam
        coef = np.zeros_like(proj)
        coef[~dom] = proj[~dom] / gaps[~dom]
        psi = u @ coef
        missing = norm_sq - np.vdot(psi, psi).real
        k = int(np.flatnonzero(dom)[0])
        psi = psi + np.sqrt(max(missing, 0.0)) * u[:, k]
        log.debug("hard case in relaxed solve (missing norm %.3g)", missing)
        return RelaxedSolution(psi, float(lmax), hard_case=True)
    coef = proj / (gamma - lam)
    psi = u @ coef
    return RelaxedSolution(psi, gamma)


# -- Takagi factorization and projection -------------------------------------

def _takagi_block(m: np.ndarray, rel_split: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    n = m.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=complex), np.zeros(0)
    scale = np.abs(m).max()
    if scale == 0:
        return np.eye(n, dtype=complex), np.zeros(n)
    a, b = m.real, m.imag
    # [[A, B], [B, -A]] [x; y] = sigma [x; y]  <=>  M conj(s) = sigma s with s = x + jy
    big = np.block([[a, b], [b, -a]])
    w, v = np.linalg.eigh((big + big.T) / 2)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    top = w[0]
    if top <= 0:
        return np.eye(n, dtype=complex), np.zeros(n)
    large = np.flatnonzero(w[:n] > rel_split * top)
    s_large = v[:n, large] + 1j * v[n:, large]
    sig_large = w[large]
    # the pairing of +sigma/-sigma eigenvectors is only approximate for small sigma
    u_, _, vh_ = np.linalg.svd(s_large, full_matrices=False)
    s_large = u_ @ vh_
    r = s_large.shape[1]
    if r == n:
        return s_large, sig_large
    # handle the small singular values on the orthogonal complement
    q, _ = np.linalg.qr(np.column_stack([s_large, np.eye(n, dtype=complex)]))
    comp = q[:, r:n]
    comp -= s_large @ (s_large.conj().T @ comp)
    comp, _ = np.linalg.qr(comp)
    sub = comp.conj().T @ m @ comp.conj()
    s_sub, sig_sub = _takagi_block((sub + sub.T) / 2, rel_split)
    return np.column_stack([s_large, comp @ s_sub]), np.concatenate([sig_large, sig_sub])


def takagi(m: np.ndarray, tol: float = 1e-9) -> TakagiFactors:
    """Takagi factorization ``M = S diag(sigma) S^T`` of a complex symmetric matrix.

    Uses the real symmetric embedding ``[[Re M, Im M], [Im M, -Re M]]``
    whose eigenvalues are ``+/- sigma``; directions with tiny singular values
    are refactored recursively on their orthogonal complement.
    """
    m = np.asarray(m, dtype=complex)
    norm = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > 1e-9 * max(norm, np.finfo(float).tiny):
        raise ValueError("matrix is not symmetric")
    s, sigma = _takagi_block((m + m.T) / 2)
    order = np.argsort(sigma)[::-1]
    s, sigma = s[:, order], sigma[order]
    resid = np.linalg.norm(s @ np.diag(sigma) @ s.T - m)
    if resid > tol * max(norm, np.finfo(float).tiny):
        raise SolverError(f"Takagi reconstruction residual {resid:.3e} exceeds tolerance")
    return TakagiFactors(s, sigma)


def project_symmetric_unitary(psi_bar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`nearest_symmetric_unitary` but also returns the Takagi factor ``S``."""
    psi_bar = np.asarray(psi_bar, dtype=complex)
    s = takagi((psi_bar + psi_bar.T) / 2).S
    psi = s @ s.T
    return (psi + psi.T) / 2, s


def nearest_symmetric_unitary(psi_bar: np.ndarray) -> np.ndarray:
    """Frobenius-nearest symmetric unitary matrix to ``psi_bar``."""
    return project_symmetric_unitary(psi_bar)[0]


def constraint_residuals(psi: np.ndarray) -> tuple[float, float]:
    """``(||Psi - Psi^T||_F, ||Psi Psi^H - I||_F)``."""
    n = psi.shape[0]
    return (float(np.linalg.norm(psi - psi.T)),
            float(np.linalg.norm(psi @ psi.conj().T - np.eye(n))))


# -- diagonal refinement -----------------------------------------------------

def phase_power_iteration(abar: np.ndarray, iterations: int = 100,
                          step_tol: float = 1e-12) -> tuple[np.ndarray, int]:
    """Maximize ``d^H Abar d`` over ``d[0] = 1`` and ``|d[n]| = 1``.

    Starts from the all-ones vector and keeps the best iterate seen, since
    the projected iteration is not guaranteed to be monotone. Stops early
    once no entry of ``d`` moves by more than ``step_tol``; the objective is
    flat near a fixed point, so it is a poor convergence signal for the phases.
    """
    m = abar.shape[0]
    d = np.ones(m, dtype=complex)
    best = d
    best_obj = np.vdot(d, abar @ d).real
    done = 0
    for done in range(1, iterations + 1):
        w = abar @ d
        if not np.any(w):
            break
        new = np.exp(1j * (np.angle(w) - np.angle(w[0])))
        new[0] = 1.0
        obj = np.vdot(new, abar @ new).real
        # ties within rounding go to the later, better converged iterate
        if obj >= best_obj - 1e-14 * abs(best_obj):
            best, best_obj = new, max(obj, best_obj)
        step = np.max(np.abs(new - d))
        d = new
        if step <= step_tol:
            break
    return best, done


def refinement_matrix(first: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """``Abar = sum f_nu^* f_nu^T`` with ``f_nu = [first_nu; rest_nu]``.

    Conjugated so that ``d^H Abar d = sum |f_nu^T d|^2``, the actual gain.
    """
    f = np.column_stack([first, rest])
    return f.conj().T @ f


def refine_diagonal(s: np.ndarray, chan: SubcarrierChannel,
                    iterations: int = 100) -> tuple[np.ndarray, int]:
    """Phases ``d = [1, d_1..d_N]`` of ``Psi = S diag(d_1..d_N) S^T``."""
    abar = refinement_matrix(chan.static, chan.congruence_diagonals(s))
    return phase_power_iteration(abar, iterations)


def optimize(chan: SubcarrierChannel, iterations: int = 100,
             return_diagnostics: bool = False):
    """Full pipeline: relaxed solve, symmetric-unitary projection, phase refinement."""
    n = chan.num_elements
    agg = aggregate_quadratic(chan)
    relaxed = solve_relaxed(agg, n)
    psi_bar = unvec(relaxed.psi, n)
    psi_proj, s = project_symmetric_unitary(psi_bar)
    d, its = refine_diagonal(s, chan, iterations)
    psi = s @ (d[1:, None] * s.T)
    psi = (psi + psi.T) / 2
    if not return_diagnostics:
        return psi
    diag = Diagnostics(relaxed=agg.total(relaxed.psi), projected=chan.total_gain(psi_proj),
                       refined=chan.total_gain(psi), hard_case=relaxed.hard_case,
                       iterations=its)
    return psi, diag
