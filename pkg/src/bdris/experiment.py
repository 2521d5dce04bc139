"""Monte-Carlo experiment runner: sweeps, schemes, result tables."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np
import yaml

from . import __version__
from .baselines import diagonal_power_iteration, random_bd, strongest_tap
from .capacity import capacity
from .channel import SystemParams, build_channel, configure
from .scenario import ScenarioConfig, generate
from .solver import optimize

log = logging.getLogger(__name__)

SCHEMES = ("algorithm1", "diagonal", "strongest_tap", "random")
SWEEP_AXES = ("bandwidth_hz", "kappa")
WORKERS_ENV = "BDRIS_WORKERS"

DEFAULTS = {
    "scenario": {
        "tx_position_m": [40.0, -40.0, 0.0],
        "rx_position_m": [20.0, 0.0, 0.0],
        "ris_center_m": [0.0, 0.0, 0.0],
        "carrier_freq_hz": 3.0e9,
        "ris_rows": 8,
        "ris_cols": 8,
        "element_spacing_m": None,
        "num_tx_paths": 6,
        "num_rx_paths": 6,
        "num_static_paths": 0,
        "rician_kappa": 0.0,
        "static_gain_offset_db": -40.0,
        "delay_spread_s": 100e-9,
        "angular_spread_rad": float(np.pi / 3),
        "shadowing_db": 3.0,
    },
    "sweep": {"axis": "bandwidth_hz", "values": [10e6, 20e6, 30e6, 40e6, 50e6]},
    "bandwidth_hz": 30e6,
    "subcarrier_spacing_hz": 150e3,
    "psd_w_per_hz": 1e-6,
    "noise_psd_dbm_per_hz": -174.0,
    "noise_figure_db": 0.0,
    "num_realizations": 100,
    "schemes": list(SCHEMES),
    "power_iterations": 100,
    "energy_tol": 1e-2,
    "master_seed": 0,
    "workers": 1,
    "output_path": "results.csv",
    "diagnostics_path": None,
}

FIGURE_PRESETS = {
    "1": {"scenario": {"rician_kappa": 0.0, "num_static_paths": 0},
          "sweep": {"axis": "bandwidth_hz", "values": [10e6, 20e6, 30e6, 40e6, 50e6]}},
    "2": {"scenario": {"num_static_paths": 0}, "bandwidth_hz": 30e6,
          "sweep": {"axis": "kappa", "values": [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]}},
    "3": {"scenario": {"rician_kappa": 0.0, "num_static_paths": 6, "static_gain_offset_db": -40.0},
          "sweep": {"axis": "bandwidth_hz", "values": [10e6, 20e6, 30e6, 40e6, 50e6]}},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    sweep_axis: str
    sweep_values: tuple[float, ...]
    bandwidth: float
    subcarrier_spacing: float
    psd: float
    noise_psd: float
    num_realizations: int
    schemes: tuple[str, ...]
    power_iterations: int = 100
    energy_tol: float = 1e-2
    workers: int = 1
    output_path: str = "results.csv"
    diagnostics_path: str | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def master_seed(self) -> int:
        return self.scenario.master_seed

    def digest(self) -> str:
        """Hash of everything that determines the numbers (not paths or workers)."""
        keep = {k: v for k, v in self.raw.items() if k not in ("output_path", "workers",
                                                               "diagnostics_path")}
        blob = json.dumps(keep, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def point(self, value: float) -> tuple[ScenarioConfig, float]:
        """Scenario and bandwidth of one sweep point."""
        if self.sweep_axis == "kappa":
            return _replace_kappa(self.scenario, value), self.bandwidth
        return self.scenario, float(value)

    def num_subcarriers(self, bandwidth: float) -> int:
        return int(round(bandwidth / self.subcarrier_spacing))


def _replace_kappa(cfg: ScenarioConfig, kappa: float) -> ScenarioConfig:
    return replace(cfg, rician_kappa=float(kappa))


def _require(cond: bool, name: str, msg: str):
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a merged configuration mapping."""
    raw = deep_merge(DEFAULTS, raw)
    unknown = set(raw) - set(DEFAULTS)
    _require(not unknown, ",".join(sorted(unknown)), "unknown configuration key")
    sc = raw["scenario"]
    unknown = set(sc) - set(DEFAULTS["scenario"])
    _require(not unknown, "scenario." + ",".join(sorted(unknown)), "unknown configuration key")

    schemes = raw["schemes"]
    _require(isinstance(schemes, list) and len(schemes) > 0, "schemes", "must be a nonempty list")
    bad = [s for s in schemes if s not in SCHEMES]
    _require(not bad, "schemes", f"unknown scheme(s) {bad}; choose from {list(SCHEMES)}")
    _require(len(set(schemes)) == len(schemes), "schemes", "duplicate entries")

    sweep = raw["sweep"]
    _require(isinstance(sweep, dict), "sweep", "must be a mapping with axis and values")
    _require(sweep.get("axis") in SWEEP_AXES, "sweep.axis", f"must be one of {list(SWEEP_AXES)}")
    values = sweep.get("values")
    _require(isinstance(values, list) and len(values) > 0, "sweep.values", "must be a nonempty list")
    values = tuple(float(v) for v in values)
    if sweep["axis"] == "bandwidth_hz":
        _require(all(v > 0 for v in values), "sweep.values", "bandwidths must be positive")
    else:
        _require(all(v >= 0 for v in values), "sweep.values", "kappa values must be >= 0")

    for key in ("bandwidth_hz", "subcarrier_spacing_hz", "psd_w_per_hz"):
        _require(float(raw[key]) > 0, key, "must be positive")
    n_real = raw["num_realizations"]
    _require(isinstance(n_real, int) and n_real >= 1, "num_realizations", "must be an integer >= 1")
    _require(isinstance(raw["power_iterations"], int) and raw["power_iterations"] >= 1,
             "power_iterations", "must be an integer >= 1")
    _require(0 < float(raw["energy_tol"]) < 1, "energy_tol", "must lie in (0, 1)")
    workers = raw["workers"]
    _require(isinstance(workers, int) and workers >= 1, "workers", "must be an integer >= 1")
    seed = raw["master_seed"]
    _require(isinstance(seed, int) and 0 <= seed < 2**64, "master_seed", "must be a 64-bit unsigned integer")

    spacing = float(raw["subcarrier_spacing_hz"])
    bws = values if sweep["axis"] == "bandwidth_hz" else (float(raw["bandwidth_hz"]),)
    for bw in bws:
        _require(round(bw / spacing) >= 1, "subcarrier_spacing_hz", f"no subcarriers at B={bw:g} Hz")

    try:
        scenario = ScenarioConfig(
            tx_position=tuple(float(x) for x in sc["tx_position_m"]),
            rx_position=tuple(float(x) for x in sc["rx_position_m"]),
            ris_center=tuple(float(x) for x in sc["ris_center_m"]),
            carrier_freq=float(sc["carrier_freq_hz"]),
            rows=int(sc["ris_rows"]), cols=int(sc["ris_cols"]),
            element_spacing=None if sc["element_spacing_m"] is None else float(sc["element_spacing_m"]),
            num_tx_paths=int(sc["num_tx_paths"]), num_rx_paths=int(sc["num_rx_paths"]),
            num_static_paths=int(sc["num_static_paths"]),
            rician_kappa=float(sc["rician_kappa"]),
            static_gain_offset_db=float(sc["static_gain_offset_db"]),
            delay_spread=float(sc["delay_spread_s"]),
            angular_spread=float(sc["angular_spread_rad"]),
            shadowing_db=float(sc["shadowing_db"]),
            master_seed=int(seed),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"scenario: {err}") from err
    for bw in bws:
        _require(scenario.carrier_freq / bw > 10, "bandwidth_hz",
                 f"carrier must exceed 10x the bandwidth (B={bw:g} Hz)")

    noise_psd = 10 ** ((float(raw["noise_psd_dbm_per_hz"]) + float(raw["noise_figure_db"])) / 10) * 1e-3
    return ExperimentConfig(
        scenario=scenario, sweep_axis=sweep["axis"], sweep_values=values,
        bandwidth=float(raw["bandwidth_hz"]), subcarrier_spacing=spacing,
        psd=float(raw["psd_w_per_hz"]), noise_psd=noise_psd,
        num_realizations=n_real, schemes=tuple(schemes),
        power_iterations=raw["power_iterations"], energy_tol=float(raw["energy_tol"]),
        workers=workers, output_path=str(raw["output_path"]),
        diagnostics_path=raw["diagnostics_path"], raw=raw,
    )


def load_config(path: str | os.PathLike | None = None, figure: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the YAML file, then the figure preset, then ``overrides``."""
    raw: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = loaded
    if figure not in (None, "custom"):
        if figure not in FIGURE_PRESETS:
            raise ConfigError(f"figure: unknown preset {figure!r}")
        raw = deep_merge(raw, FIGURE_PRESETS[figure])
    raw = deep_merge(raw, overrides or {})
    return build_config(raw)


@dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    scheme: str
    mean_capacity: float
    std_error: float
    num_realizations: int
    num_failed: int
    runtime_s: float


def _task(args):
    cfg, point_index, value, index = args
    scenario, bandwidth = cfg.point(value)
    s = cfg.num_subcarriers(bandwidth)
    real = generate(scenario, index)
    params = SystemParams(scenario.carrier_freq, bandwidth, s, rows=scenario.rows,
                          cols=scenario.cols, element_spacing=scenario.spacing)
    params = configure(real.paths, params, cfg.energy_tol)
    taps, chan = build_channel(real.paths, params)
    q = cfg.psd * bandwidth / s
    noise = cfg.noise_psd * bandwidth
    out: dict[str, tuple] = {}
    diag_info = {}
    for scheme in cfg.schemes:
        t0 = time.perf_counter()
        try:
            if scheme == "algorithm1":
                psi, stages = optimize(chan, cfg.power_iterations, return_diagnostics=True)
                diag_info = stages.as_row()
            elif scheme == "diagonal":
                psi = diagonal_power_iteration(chan, cfg.power_iterations)
            elif scheme == "strongest_tap":
                psi = strongest_tap(taps, chan)
            else:
                rng = np.random.default_rng(np.random.SeedSequence(
                    [cfg.master_seed, index, 1 + SCHEMES.index("random")]))
                psi = random_bd(chan, rng, cfg.power_iterations)
            c = capacity(psi, chan, bandwidth, params.num_taps, q, noise)
            out[scheme] = ("ok", c.capacity, chan.total_gain(psi), time.perf_counter() - t0)
        except (ArithmeticError, np.linalg.LinAlgError, RuntimeError, ValueError) as err:
            out[scheme] = ("fail", repr(err), np.nan, time.perf_counter() - t0)
    return point_index, index, out, diag_info


def _resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV}: must be >= 1")
        return n
    return cfg.workers


def run_experiment(cfg: ExperimentConfig, workers: int | None = None):
    """Run every (sweep point, realization, scheme); returns ``(rows, diagnostics)``.

    Tasks may run in a process pool but are reduced in index order, so the
    numbers depend only on the configuration.
    """
    workers = workers or _resolve_workers(cfg)
    tasks = [(cfg, p, v, k) for p, v in enumerate(cfg.sweep_values)
             for k in range(cfg.num_realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_task(t) for t in tasks]

    rows, diagnostics = [], []
    for p, value in enumerate(cfg.sweep_values):
        per_point = [r for r in results if r[0] == p]
        per_point.sort(key=lambda r: r[1])
        for _, index, out, info in per_point:
            if info:
                diagnostics.append({"sweep_value": value, "realization": index, **info})
            if "algorithm1" in out and "diagonal" in out and out["algorithm1"][0] == "ok" \
                    and out["diagonal"][0] == "ok" and out["algorithm1"][2] < out["diagonal"][2]:
                log.warning("regression: algorithm1 total gain below diagonal baseline "
                            "(sweep value %g, realization %d)", value, index)
        for scheme in cfg.schemes:
            caps, failed, runtime = [], 0, 0.0
            for _, index, out, _ in per_point:
                status, val, _, dt = out[scheme]
                runtime += dt
                if status == "ok":
                    caps.append(val)
                else:
                    failed += 1
                    log.error("%s failed at sweep value %g, realization %d: %s",
                              scheme, value, index, val)
            caps = np.asarray(caps)
            mean = float(caps.mean()) if caps.size else float("nan")
            sem = float(caps.std(ddof=1) / np.sqrt(caps.size)) if caps.size > 1 else 0.0
            rows.append(ResultRow(value, scheme, mean, sem, int(caps.size), failed, runtime))
    return rows, diagnostics


RESULT_FIELDS = ["sweep_value", "scheme", "mean_capacity_bps", "std_error_bps",
                 "num_realizations", "num_failed", "runtime_s"]


def format_results(rows, cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# bdris results\n# code_version={__version__}\n# config_sha256={cfg.digest()}\n")
    buf.write(f"# master_seed={cfg.master_seed}\n# sweep_axis={cfg.sweep_axis}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for r in rows:
        writer.writerow([repr(r.sweep_value), r.scheme, repr(r.mean_capacity), repr(r.std_error),
                         r.num_realizations, r.num_failed, f"{r.runtime_s:.3f}"])
    return buf.getvalue()


def read_results(text: str) -> list[ResultRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return [ResultRow(float(d["sweep_value"]), d["scheme"], float(d["mean_capacity_bps"]),
                      float(d["std_error_bps"]), int(d["num_realizations"]),
                      int(d["num_failed"]), float(d["runtime_s"]))
            for d in csv.DictReader(lines)]


def emit_plot_data(rows, path: str | os.PathLike, sweep_axis: str = "sweep_value") -> FsPath:
    """Wide table: one row per sweep value, one column per scheme."""
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    values = list(dict.fromkeys(r.sweep_value for r in rows))
    table = {(r.sweep_value, r.scheme): r.mean_capacity for r in rows}
    path = FsPath(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([sweep_axis] + schemes)
        for v in values:
            writer.writerow([f"{v:.12g}"] + [f"{table.get((v, s), float('nan')):.12g}" for s in schemes])
    return path


def write_diagnostics(diagnostics: list[dict], path) -> None:
    if not diagnostics:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(diagnostics[0]), lineterminator="\n")
        writer.writeheader()
        for row in diagnostics:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
