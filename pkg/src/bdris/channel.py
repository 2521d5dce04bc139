"""Wideband BD-RIS channel model.

Turns a multipath description into symbol-spaced taps, per-subcarrier
coefficients and the quadratic aggregates used by the optimizer.

Conventions used throughout the package:

* ``sinc(x) = sin(pi x) / (pi x)`` (``numpy.sinc``).
* RIS elements live in the yz-plane and are indexed column-major, i.e.
  element ``n = row + rows * col``.
* ``vec`` is column-major (``order="F"``), so ``vec(a b^T) = kron(b, a)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import speed_of_light

LINK_TYPES = ("static", "tx", "rx")


@dataclass(frozen=True)
class Path:
    """One propagation path: real amplitude, delay and direction at the RIS."""

    attenuation: float
    delay: float
    azimuth: float = 0.0
    elevation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.attenuation <= 1.0:
            raise ValueError(f"attenuation must lie in [0, 1], got {self.attenuation}")
        if not (np.isfinite(self.delay) and self.delay >= 0.0):
            raise ValueError(f"delay must be finite and >= 0, got {self.delay}")


@dataclass(frozen=True)
class PathSet:
    """Static (TX->RX), TX->RIS and RIS->RX paths of one realization."""

    static_paths: tuple[Path, ...]
    tx_paths: tuple[Path, ...]
    rx_paths: tuple[Path, ...]

    def __post_init__(self):
        object.__setattr__(self, "static_paths", tuple(self.static_paths))
        object.__setattr__(self, "tx_paths", tuple(self.tx_paths))
        object.__setattr__(self, "rx_paths", tuple(self.rx_paths))
        if not self.tx_paths or not self.rx_paths:
            raise ValueError("tx_paths and rx_paths must both be nonempty")
        for path in self.tx_paths + self.rx_paths:
            if abs(path.azimuth) >= np.pi / 2 or abs(path.elevation) >= np.pi / 2:
                raise ValueError("RIS-side path angles must be within (-pi/2, pi/2) of broadside")

    @property
    def static_delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.static_paths], dtype=float)

    @property
    def cascaded_delays(self) -> np.ndarray:
        """Total TX->RIS->RX delays, shape ``(L_t, L_r)``."""
        tx = np.array([p.delay for p in self.tx_paths])
        rx = np.array([p.delay for p in self.rx_paths])
        return tx[:, None] + rx[None, :]

    def to_text(self) -> str:
        """Serialize as CSV, one record per path."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["link", "attenuation", "delay_s", "azimuth_rad", "elevation_rad"])
        for link, paths in zip(LINK_TYPES, (self.static_paths, self.tx_paths, self.rx_paths)):
            for p in paths:
                writer.writerow([link, repr(float(p.attenuation)), repr(float(p.delay)),
                                 repr(float(p.azimuth)), repr(float(p.elevation))])
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "PathSet":
        groups: dict[str, list[Path]] = {k: [] for k in LINK_TYPES}
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        for row in csv.DictReader(lines):
            link = row["link"].strip()
            if link not in groups:
                raise ValueError(f"unknown link type {link!r}")
            groups[link].append(Path(float(row["attenuation"]), float(row["delay_s"]),
                                     float(row["azimuth_rad"]), float(row["elevation_rad"])))
        return cls(groups["static"], groups["tx"], groups["rx"])


@dataclass(frozen=True)
class SystemParams:
    carrier_freq: float
    bandwidth: float
    num_subcarriers: int
    rows: int = 8
    cols: int = 8
    element_spacing: float | None = None  # defaults to lambda / 4
    noise_psd: float = 1.0
    clock_delay: float = 0.0
    num_taps: int = 0

    def __post_init__(self):
        if self.carrier_freq / self.bandwidth <= 10:
            raise ValueError("carrier frequency must be much larger than the bandwidth (f_c/B > 10)")
        if self.num_subcarriers <= self.num_taps:
            raise ValueError("need num_subcarriers > num_taps (cyclic prefix shorter than block)")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("RIS grid must have at least one row and column")
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 4)

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.carrier_freq

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    def positions(self) -> np.ndarray:
        return grid_positions(self.rows, self.cols, self.element_spacing)


def grid_positions(rows: int, cols: int, spacing: float) -> np.ndarray:
    """Element positions ``(rows*cols, 3)`` of a yz-plane grid centred at the origin."""
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    r = r.ravel(order="F")
    c = c.ravel(order="F")
    pos = np.zeros((rows * cols, 3))
    pos[:, 1] = (c - (cols - 1) / 2) * spacing
    pos[:, 2] = (r - (rows - 1) / 2) * spacing
    return pos


def direction_vector(azimuth, elevation) -> np.ndarray:
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    return np.stack([np.cos(elevation) * np.cos(azimuth),
                     np.cos(elevation) * np.sin(azimuth),
                     np.sin(elevation)], axis=-1)


def element_delay_offsets(azimuth, elevation, positions: np.ndarray) -> np.ndarray:
    """Plane-wave delay of every element relative to element 1.

    ``offset_n = (p_n - p_1) . u(azimuth, elevation) / c``. A far end seen
    from the surface at geometric angles ``(az, el)`` is therefore described
    by the path angles ``(-az, -el)``.
    """
    u = direction_vector(azimuth, elevation)
    rel = positions - positions[0]
    return (u @ rel.T) / speed_of_light


def array_response(azimuth, elevation, positions: np.ndarray, carrier_freq: float) -> np.ndarray:
    """Unit-modulus array response; vectorizes over leading angle dimensions."""
    offsets = element_delay_offsets(azimuth, elevation, positions)
    return np.exp(-2j * np.pi * carrier_freq * offsets)


def _tap_energy_profile(delays: np.ndarray, weights: np.ndarray, clock_delay: float,
                        bandwidth: float, horizon: int) -> np.ndarray:
    ell = np.arange(horizon + 1)
    arg = ell[:, None] + bandwidth * (clock_delay - delays[None, :])
    return (np.sinc(arg) ** 2) @ weights


def _tail_length(profile: np.ndarray, energy_tol: float) -> int:
    total = profile.sum()
    if total <= 0:
        return 0
    # tail[T] = energy of taps with index > T
    tail = total - np.cumsum(profile)
    return int(np.argmax(tail < energy_tol * total))


def choose_clock_and_length(paths: PathSet, bandwidth: float, energy_tol: float = 1e-2,
                            max_taps: int | None = None) -> tuple[float, int]:
    """Receiver clock delay and channel length.

    The clock delay is the earliest end-to-end delay, so tap 0 is causal and
    anchored on the first arrival. The length ``T`` is the smallest index
    beyond which less than ``energy_tol`` of each channel type's (static and
    cascaded, each normalized on its own) tap energy remains. ``max_taps``
    caps ``T`` (use ``S - 1``).
    """
    if not 0 < energy_tol < 1:
        raise ValueError("energy_tol must lie in (0, 1)")
    if not paths.tx_paths or not paths.rx_paths:
        raise ValueError("empty PathSet")
    static = paths.static_delays
    cascaded = paths.cascaded_delays.ravel()
    eta = float(min(np.min(cascaded), np.min(static) if static.size else np.inf))

    spread = max(np.max(cascaded), np.max(static) if static.size else 0.0) - eta
    horizon = int(np.ceil(bandwidth * spread)) + 4096

    length = 0
    if static.size:
        w = np.array([p.attenuation for p in paths.static_paths]) ** 2
        length = _tail_length(_tap_energy_profile(static, w, eta, bandwidth, horizon), energy_tol)
    a_t = np.array([p.attenuation for p in paths.tx_paths])
    a_r = np.array([p.attenuation for p in paths.rx_paths])
    w = (np.outer(a_t, a_r) ** 2).ravel()
    profile = _tap_energy_profile(cascaded, w, eta, bandwidth, horizon)
    length = max(length, _tail_length(profile, energy_tol))
    if max_taps is not None:
        length = min(length, max_taps)
    return eta, length


def configure(paths: PathSet, params: SystemParams, energy_tol: float = 1e-2) -> SystemParams:
    """Return ``params`` with clock delay and tap count chosen for ``paths``."""
    eta, length = choose_clock_and_length(paths, params.bandwidth, energy_tol,
                                          max_taps=params.num_subcarriers - 1)
    return replace(params, clock_delay=eta, num_taps=length)


@dataclass(frozen=True)
class TapSet:
    """Discrete-time taps ``c_s[l]`` (shape ``(T+1,)``) and ``c_ij[l]`` (shape ``(T+1, L_t, L_r)``)."""

    static_taps: np.ndarray
    cascaded_taps: np.ndarray
    clock_delay: float = 0.0

    @property
    def num_taps(self) -> int:
        return self.static_taps.shape[0] - 1

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# clock_delay_s={float(self.clock_delay)!r}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "i", "j", "tap", "real", "imag"])
        for ell, c in enumerate(self.static_taps):
            writer.writerow(["static", 0, 0, ell, repr(float(c.real)), repr(float(c.imag))])
        for (ell, i, j), c in np.ndenumerate(self.cascaded_taps):
            writer.writerow(["cascaded", i, j, ell, repr(float(c.real)), repr(float(c.imag))])
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "TapSet":
        eta = 0.0
        body = []
        for ln in text.splitlines():
            if ln.startswith("# clock_delay_s="):
                eta = float(ln.split("=", 1)[1])
            elif ln.strip() and not ln.startswith("#"):
                body.append(ln)
        rows = list(csv.DictReader(body))
        casc = [r for r in rows if r["kind"] == "cascaded"]
        stat = [r for r in rows if r["kind"] == "static"]
        n_taps = 1 + max(int(r["tap"]) for r in rows)
        static = np.zeros(n_taps, dtype=complex)
        for r in stat:
            static[int(r["tap"])] = complex(float(r["real"]), float(r["imag"]))
        lt = 1 + max(int(r["i"]) for r in casc)
        lr = 1 + max(int(r["j"]) for r in casc)
        cascaded = np.zeros((n_taps, lt, lr), dtype=complex)
        for r in casc:
            cascaded[int(r["tap"]), int(r["i"]), int(r["j"])] = complex(float(r["real"]), float(r["imag"]))
        return cls(static, cascaded, eta)


def compute_taps(paths: PathSet, params: SystemParams) -> TapSet:
    """Symbol-spaced taps for ``l = 0..T`` using the path clock delay in ``params``."""
    fc, bw, eta = params.carrier_freq, params.bandwidth, params.clock_delay
    ell = np.arange(params.num_taps + 1)

    static = np.zeros(ell.size, dtype=complex)
    if paths.static_paths:
        alpha = np.array([p.attenuation for p in paths.static_paths])
        tau = paths.static_delays
        phase = alpha * np.exp(-2j * np.pi * fc * (tau - eta))
        static = np.sinc(ell[:, None] + bw * (eta - tau)[None, :]) @ phase

    a_t = np.array([p.attenuation for p in paths.tx_paths])
    a_r = np.array([p.attenuation for p in paths.rx_paths])
    tau = paths.cascaded_delays
    gain = np.outer(a_t, a_r) * np.exp(-2j * np.pi * fc * (tau - eta))
    cascaded = gain[None] * np.sinc(ell[:, None, None] + bw * (eta - tau)[None])
    return TapSet(static, cascaded, eta)


def dft_coeffs(taps: TapSet, num_subcarriers: int) -> tuple[np.ndarray, np.ndarray]:
    """S-point DFTs of the static and cascaded tap sequences (zero padded)."""
    if num_subcarriers <= taps.num_taps:
        raise ValueError(f"need S > T, got S={num_subcarriers}, T={taps.num_taps}")
    static = np.fft.fft(taps.static_taps, n=num_subcarriers)
    cascaded = np.fft.fft(taps.cascaded_taps, n=num_subcarriers, axis=0)
    return static, cascaded


@dataclass(frozen=True, eq=False)
class SubcarrierChannel:
    """Per-subcarrier static coefficients and cascaded matrices ``H_nu``.

    Either ``matrices`` (shape ``(S, N, N)``) is given directly, or the
    factored form ``H_nu = sum_ij coeffs[nu, i, j] a_in[i] a_out[j]^T`` via
    ``coeffs`` ``(S, L_t, L_r)``, ``incident`` ``(L_t, N)`` and ``outgoing``
    ``(L_r, N)``. The factored form is much cheaper for large surfaces.
    """

    static: np.ndarray
    given_matrices: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    incident: np.ndarray | None = None
    outgoing: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "static", np.asarray(self.static, dtype=complex))
        if self.given_matrices is None and self.coeffs is None:
            raise ValueError("either matrices or the factored form is required")
        if self.given_matrices is not None:
            m = np.asarray(self.given_matrices, dtype=complex)
            if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] != self.static.size:
                raise ValueError("matrices must have shape (S, N, N) matching static")
            object.__setattr__(self, "given_matrices", m)

    @classmethod
    def from_matrices(cls, static, matrices) -> "SubcarrierChannel":
        return cls(np.asarray(static), given_matrices=np.asarray(matrices))

    @property
    def num_subcarriers(self) -> int:
        return self.static.size

    @property
    def num_elements(self) -> int:
        if self.given_matrices is not None:
            return self.given_matrices.shape[1]
        return self.incident.shape[1]

    @property
    def factored(self) -> bool:
        return self.given_matrices is None

    @cached_property
    def matrices(self) -> np.ndarray:
        if self.given_matrices is not None:
            return self.given_matrices
        return np.einsum("vij,in,jm->vnm", self.coeffs, self.incident, self.outgoing)

    def vectors(self) -> np.ndarray:
        """Rows ``h_nu^T = vec(H_nu)^T``, shape ``(S, N^2)``."""
        s, n = self.num_subcarriers, self.num_elements
        return self.matrices.transpose(0, 2, 1).reshape(s, n * n)

    def trace_with(self, psi: np.ndarray) -> np.ndarray:
        """``tr(Psi H_nu)`` for every subcarrier."""
        psi = np.asarray(psi)
        n = self.num_elements
        if psi.shape != (n, n):
            raise ValueError(f"reflection matrix must be {n}x{n}, got {psi.shape}")
        if self.factored:
            # tr(Psi a_i a_o^T) = a_o^T Psi a_i
            inner = self.outgoing @ psi @ self.incident.T  # (L_r, L_t)
            return np.einsum("vij,ji->v", self.coeffs, inner)
        return np.einsum("nm,vmn->v", psi, self.matrices)

    def response(self, psi: np.ndarray) -> np.ndarray:
        """End-to-end subcarrier coefficients ``h_nu + tr(Psi H_nu)``."""
        return self.static + self.trace_with(psi)

    def gains(self, psi: np.ndarray) -> np.ndarray:
        return np.abs(self.response(psi)) ** 2

    def total_gain(self, psi: np.ndarray) -> float:
        return float(np.sum(self.gains(psi)))

    def congruence_diagonals(self, s: np.ndarray) -> np.ndarray:
        """``diag(S^T H_nu S)`` for every subcarrier, shape ``(S, N)``."""
        if self.factored:
            p_in = self.incident @ s
            p_out = self.outgoing @ s
            return np.einsum("vij,in,jn->vn", self.coeffs, p_in, p_out)
        return np.einsum("mn,vmk,kn->vn", s, self.matrices, s)

    def diagonals(self) -> np.ndarray:
        """``diag(H_nu)`` for every subcarrier, shape ``(S, N)``."""
        if self.factored:
            return np.einsum("vij,in,jn->vn", self.coeffs, self.incident, self.outgoing)
        return np.einsum("vnn->vn", self.matrices)


def cascaded_matrices(static_coeffs: np.ndarray, cascaded_coeffs: np.ndarray,
                      incident: np.ndarray, outgoing: np.ndarray) -> SubcarrierChannel:
    """Assemble ``H_nu = sum_ij c_ij[nu] a(incident_i) a(outgoing_j)^T`` (kept factored)."""
    return SubcarrierChannel(static_coeffs, coeffs=np.asarray(cascaded_coeffs, dtype=complex),
                             incident=np.asarray(incident, dtype=complex),
                             outgoing=np.asarray(outgoing, dtype=complex))


def channel_at(psi: np.ndarray, chan: SubcarrierChannel, nu: int) -> complex:
    psi = np.asarray(psi)
    n = chan.num_elements
    if psi.shape != (n, n):
        raise ValueError(f"reflection matrix must be {n}x{n}, got {psi.shape}")
    if chan.factored:
        inner = chan.outgoing @ psi @ chan.incident.T
        return complex(chan.static[nu] + np.einsum("ij,ji->", chan.coeffs[nu], inner))
    return complex(chan.static[nu] + np.trace(psi @ chan.matrices[nu]))


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


@dataclass(frozen=True, eq=False)
class QuadraticAggregates:
    """Total gain ``psi^H A psi + 2 Re(psi^H b) + const_term``.

    ``A`` is kept as a root ``R`` with ``A = R^H R`` so that the low rank of
    the wideband cascaded channel is never materialized as an ``N^2 x N^2``
    matrix unless asked for.
    """

    root: np.ndarray
    b: np.ndarray
    const_term: float

    @classmethod
    def from_matrix(cls, a: np.ndarray, b: np.ndarray, const_term: float = 0.0) -> "QuadraticAggregates":
        a = np.asarray(a, dtype=complex)
        if not np.allclose(a, a.conj().T, atol=1e-12 * max(1.0, np.abs(a).max())):
            raise ValueError("A must be Hermitian")
        w, u = np.linalg.eigh((a + a.conj().T) / 2)
        w = np.clip(w, 0.0, None)
        keep = w > 0
        root = np.sqrt(w[keep])[:, None] * u[:, keep].conj().T
        return cls(root, np.asarray(b, dtype=complex), float(const_term))

    @property
    def dim(self) -> int:
        return self.b.size

    @cached_property
    def A(self) -> np.ndarray:
        return self.root.conj().T @ self.root

    def value(self, psi: np.ndarray) -> float:
        """Gain without the constant: ``psi^H A psi + 2 Re(psi^H b)``."""
        rp = self.root @ psi
        return float(np.vdot(rp, rp).real + 2 * np.vdot(psi, self.b).real)

    def total(self, psi: np.ndarray) -> float:
        return self.value(psi) + self.const_term


def _compress(rows: np.ndarray) -> np.ndarray:
    """Root with at most ``min(rows.shape)`` rows and the same Gram matrix."""
    if rows.shape[0] > rows.shape[1]:
        return np.linalg.qr(rows, mode="r")
    return rows


def aggregate_quadratic(chan: SubcarrierChannel) -> QuadraticAggregates:
    """``A = sum h_nu^* h_nu^T``, ``b = sum hbar_nu h_nu^*``, ``const = sum |hbar_nu|^2``."""
    static = chan.static
    const = float(np.sum(np.abs(static) ** 2))
    if chan.factored:
        s, lt, lr = chan.coeffs.shape
        # column (i, j) of K is vec(a_i a_o_j^T) = kron(a_o_j, a_i)
        k = np.einsum("jm,in->ijmn", chan.outgoing, chan.incident).reshape(lt * lr, -1)
        c = chan.coeffs.reshape(s, lt * lr)
        root = _compress(c) @ k
        b = (c.conj().T @ static) @ k.conj()
    else:
        h = chan.vectors()
        root = _compress(h)
        b = h.conj().T @ static
    return QuadraticAggregates(root, b, const)


def build_channel(paths: PathSet, params: SystemParams) -> tuple[TapSet, SubcarrierChannel]:
    """Taps and subcarrier channel of ``paths`` under already configured ``params``."""
    taps = compute_taps(paths, params)
    static_bar, cascaded_bar = dft_coeffs(taps, params.num_subcarriers)
    pos = params.positions()
    a_in = array_response([p.azimuth for p in paths.tx_paths],
                          [p.elevation for p in paths.tx_paths], pos, params.carrier_freq)
    a_out = array_response([p.azimuth for p in paths.rx_paths],
                           [p.elevation for p in paths.rx_paths], pos, params.carrier_freq)
    return taps, cascaded_matrices(static_bar, cascaded_bar, a_in, a_out)


def per_tap_matrices(taps: TapSet, incident: np.ndarray, outgoing: np.ndarray) -> np.ndarray:
    """Cascaded tap matrices ``H^(l) = sum_ij c_ij[l] a_i a_o^T``, shape ``(T+1, N, N)``."""
    return np.einsum("lij,in,jm->lnm", taps.cascaded_taps, incident, outgoing)


def pathsets_to_text(paths: Iterable[PathSet], labels: Sequence[str] | None = None) -> str:
    """Concatenate several path sets, each introduced by a ``# realization`` line."""
    out = []
    for k, ps in enumerate(paths):
        label = labels[k] if labels is not None else str(k)
        out.append(f"# realization {label}\n{ps.to_text()}")
    return "".join(out)
