"""Scenario execution, run artifacts, report re-evaluation and plot-ready data.

A run directory holds::

    config.ini          effective configuration, every key written out
    density.csv         t,x,rho at every recorded time
    trajectories.csv    trajectory,seed,r0,escaped,t,x,zeta
    report.json         consistency report
    provenance.json     config echo, overrides, seed, versions, file digests

The report is computed from exactly the values stored in the CSV files, so
``check_run`` reproduces it byte for byte.
"""

import dataclasses
import hashlib
import json
import math
import platform
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, parse_config, serialize_config
from .grid import PhysicalConstants, SpatialGrid, build_grid
from .propagator import DensitySeries, Free, GaussianBarrier, Harmonic, analytic_coherent_state, propagate
from .stats import (
    CheckEntry,
    ConsistencyReport,
    UndersampledError,
    _entry,
    check_equivariance,
    check_mean_consistency,
    ck_bootstrap,
    diagnostic,
    G_constraint_check,
    tv_drift,
    zeta_mean_check,
)
from .trajectories import (
    EscapeRateError,
    Ensemble,
    EnsembleSpec,
    WhiteNoise,
    ZeroNoise,
    check_escape_rate,
    integrate_ensemble,
    noise_from_name,
    sample_initial_positions,
)
from .wavefunction import WaveField, gaussian_packet, normalize

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_ESCAPE = 3
EXIT_ARTIFACTS = 4

DENSITY_FILE = "density.csv"
TRAJECTORY_FILE = "trajectories.csv"
REPORT_FILE = "report.json"
PROVENANCE_FILE = "provenance.json"
CONFIG_FILE = "config.ini"
ESCAPE_FILE = "escape.json"
PLOT_DIR = "plot"

# boundary cells watched by the boundary-density diagnostic
BOUNDARY_CELLS = 4
BOUNDARY_DENSITY_LIMIT = 1e-10


class ArtifactError(RuntimeError):
    pass


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    report: dict = None
    message: str = ""


# ---------------------------------------------------------------- scenarios


def build_scenario(cfg: ScenarioConfig):
    """Grid, constants, initial state and potential for a configuration."""
    grid = build_grid(cfg.x_min, cfg.x_max, cfg.n_points)
    consts = PhysicalConstants(cfg.hbar, cfg.mass)
    name = cfg.scenario
    if name == "free_gaussian":
        psi0 = gaussian_packet(grid, cfg.x_c, cfg.sigma0, cfg.k0)
        potential = Free()
    elif name == "harmonic_coherent":
        psi0 = analytic_coherent_state(grid, cfg.x_c, cfg.omega, consts, 0.0)
        potential = Harmonic(cfg.omega)
    elif name == "two_gaussian_superposition":
        half = 0.5 * cfg.separation
        left = gaussian_packet(grid, cfg.x_c - half, cfg.sigma0, cfg.k0)
        right = gaussian_packet(grid, cfg.x_c + half, cfg.sigma0, -cfg.k0)
        psi0 = normalize(WaveField(grid, 0.0, left.amplitudes + right.amplitudes))
        potential = Free()
    elif name == "gaussian_barrier":
        psi0 = gaussian_packet(grid, cfg.x_c, cfg.sigma0, cfg.k0)
        potential = GaussianBarrier(cfg.barrier_height, cfg.barrier_width, cfg.barrier_center)
    else:
        raise ConfigError(f"[run] scenario: unknown scenario {name!r}")
    return grid, consts, psi0, potential


# ---------------------------------------------------------------- report


def _is_diagnostic(check, noise) -> bool:
    return check == "tv_drift" or (check == "chapman_kolmogorov" and isinstance(noise, WhiteNoise))


def _undersampled(check, exc, verdict) -> CheckEntry:
    if not verdict:
        return diagnostic(check, float("nan"), float("nan"), 0, f"undersampled: {exc}")
    return CheckEntry(check, float("nan"), float("nan"), float("nan"), float("nan"), 0, False,
                      f"undersampled: {exc}")


def boundary_density(series: DensitySeries) -> float:
    """Largest density over all recorded times in the cells next to the domain edges."""
    rho = series.densities
    edge = np.concatenate((rho[:, :BOUNDARY_CELLS], rho[:, -BOUNDARY_CELLS:]), axis=1)
    return float(edge.max()) if edge.size else 0.0


def build_report(cfg: ScenarioConfig, series: DensitySeries, ensemble: Ensemble) -> ConsistencyReport:
    """Evaluate the configured checks on stored densities and paths."""
    report = ConsistencyReport()
    times = [float(t) for t in series.times]
    for check in cfg.checks:
        try:
            if check == "mean_consistency":
                report.extend(check_mean_consistency(ensemble, series, times))
            elif check == "equivariance":
                report.extend(check_equivariance(ensemble, series, times, cfg.equivariance_bins))
            elif check == "zeta_mean":
                report.extend(zeta_mean_check(ensemble))
            elif check == "g_constraint":
                report.extend(G_constraint_check(ensemble, series, times))
            elif check == "tv_drift":
                report.extend(tv_drift(ensemble, series, times, cfg.equivariance_bins))
            elif check == "chapman_kolmogorov":
                report.extend([_ck_entry(cfg, ensemble)])
        except UndersampledError as exc:
            report.extend([_undersampled(check, exc, not _is_diagnostic(check, ensemble.noise))])
    rho_edge = boundary_density(series)
    report.extend([diagnostic(
        "boundary_density", times[-1], rho_edge, ensemble.n,
        "ok" if rho_edge < BOUNDARY_DENSITY_LIMIT else f"exceeds {BOUNDARY_DENSITY_LIMIT:g}; enlarge the grid",
    )])
    return report


def _ck_entry(cfg, ensemble):
    t0, t1, t2 = cfg.ck_times
    res = ck_bootstrap(ensemble, t0, t1, t2, cfg.ck_bins)
    note = f"{cfg.ck_bins} quantile bins, times {t0:g},{t1:g},{t2:g}; floor = bootstrap mean + 4 sd"
    if _is_diagnostic("chapman_kolmogorov", ensemble.noise):
        # no expected value for this noise model: report without a verdict
        return diagnostic("chapman_kolmogorov", t2, res.residual, res.n,
                          f"{note}; floor {res.noise_floor:.4g}")
    return _entry("chapman_kolmogorov", t2, res.residual, res.bootstrap_std, res.noise_floor, res.n, note)


def _clean(obj):
    # JSON has no NaN or infinity
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def report_document(cfg: ScenarioConfig, report: ConsistencyReport, ensemble: Ensemble) -> dict:
    doc = report.to_dict()
    doc.update({
        "scenario": cfg.scenario,
        "noise": cfg.noise,
        "n_trajectories": int(ensemble.n),
        "n_escaped": int(np.count_nonzero(ensemble.escaped)),
    })
    return doc


# ---------------------------------------------------------------- files


def _write_text(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_rows(path: Path, header: str, columns, formats):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if len(columns[0]):
            np.savetxt(fh, np.column_stack(columns), fmt=formats, delimiter=",")


def write_density(path: Path, series: DensitySeries):
    n_t, n_x = series.densities.shape
    t = np.repeat(series.times, n_x)
    x = np.tile(series.grid.x, n_t)
    _write_rows(path, "t,x,rho", [t, x, series.densities.ravel()], "%.17g")


def write_trajectories(path: Path, ensemble: Ensemble):
    n, n_t = ensemble.positions.shape
    idx = np.repeat(np.arange(n), n_t)
    cols = [
        idx,
        np.repeat(ensemble.seeds, n_t),
        np.repeat(ensemble.initial_positions, n_t),
        np.repeat(ensemble.escaped.astype(int), n_t),
        np.tile(ensemble.times, n),
        ensemble.positions.ravel(),
        ensemble.zeta.ravel(),
    ]
    fmt = ["%d", "%d", "%.17g", "%d", "%.17g", "%.17g", "%.17g"]
    _write_rows(path, "trajectory,seed,r0,escaped,t,x,zeta", cols, fmt)


def _load_csv(path: Path, header: str) -> np.ndarray:
    if not path.is_file():
        raise ArtifactError(f"missing artifact {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first != header:
        raise ArtifactError(f"{path}: expected header {header!r}, found {first!r}")
    n_cols = header.count(",") + 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # header-only file
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data.reshape(-1, n_cols)


def read_density(path: Path, cfg: ScenarioConfig) -> DensitySeries:
    data = _load_csv(path, "t,x,rho")
    n_x = cfg.n_points
    if data.shape[0] == 0 or data.shape[0] % n_x:
        raise ArtifactError(f"{path}: {data.shape[0]} rows is not a whole number of {n_x}-point snapshots")
    grid = SpatialGrid(cfg.x_min, cfg.x_max, n_x)
    times = data[::n_x, 0].copy()
    return DensitySeries(grid, times, data[:, 2].reshape(-1, n_x).copy())


def read_trajectories(path: Path, cfg: ScenarioConfig, times: np.ndarray) -> Ensemble:
    data = _load_csv(path, "trajectory,seed,r0,escaped,t,x,zeta")
    n_t = times.size
    if data.shape[0] % n_t:
        raise ArtifactError(f"{path}: {data.shape[0]} rows do not match {n_t} recorded times")
    n = data.shape[0] // n_t
    rows = data.reshape(n, n_t, 7)
    return Ensemble(
        times=times.copy(),
        positions=rows[:, :, 5].copy(),
        zeta=rows[:, :, 6].copy(),
        initial_positions=rows[:, 0, 2].copy(),
        seeds=rows[:, 0, 1].astype(np.int64),
        escaped=rows[:, 0, 3].astype(bool),
        noise=noise_from_name(cfg.noise),
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    return {"cqmlab": __version__, "numpy": np.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------- run / check


def apply_overrides(cfg: ScenarioConfig, n=None, seed=None, noise=None, out=None):
    changes = {}
    if n is not None:
        changes["n"] = int(n)
    if seed is not None:
        changes["base_seed"] = int(seed)
    if noise is not None:
        changes["noise"] = noise
    if out is not None:
        changes["dir"] = str(out)
    if not changes:
        return cfg, {}
    return cfg.replace(**changes), changes


def simulate(cfg: ScenarioConfig, workers=None):
    """Propagate, sample and integrate; returns (recorded densities, ensemble).

    Raises ``EscapeRateError`` carrying the ensemble as ``exc.ensemble``.
    """
    grid, consts, psi0, potential = build_scenario(cfg)
    history = propagate(psi0, potential, consts, cfg.t_final, cfg.dt, cfg.snapshot_every)
    series = history.density_series(cfg.write_every)
    noise = noise_from_name(cfg.noise)
    spec = EnsembleSpec(cfg.n, cfg.base_seed, noise, cfg.dt_sub)
    r0 = sample_initial_positions(psi0, cfg.n, cfg.base_seed)
    method = "rk4" if isinstance(noise, ZeroNoise) else "heun"
    ens = integrate_ensemble(history, r0, spec, cfg.write_every, method, workers)
    # recorded times are taken from the density series so both files agree exactly
    ens = dataclasses.replace(ens, times=series.times)
    try:
        check_escape_rate(ens)
    except EscapeRateError as exc:
        exc.ensemble = ens
        exc.series = series
        raise
    return series, ens


def run_scenario(cfg: ScenarioConfig, workers=None, overrides=None) -> RunResult:
    """Execute a scenario and write its artifacts into ``cfg.dir``."""
    out = Path(cfg.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return RunResult(EXIT_ARTIFACTS, out, message=f"cannot create output directory: {exc}")
    # the output location is not part of the experiment
    overrides = {k: v for k, v in (overrides or {}).items() if k != "dir"}
    try:
        series, ens = simulate(cfg, workers)
    except EscapeRateError as exc:
        ens, series = exc.ensemble, exc.series
        diag = {
            "error": str(exc),
            "n_trajectories": int(ens.n),
            "n_escaped": int(np.count_nonzero(ens.escaped)),
            "boundary_density": boundary_density(series),
            "domain": [cfg.x_min, cfg.x_max],
        }
        _write_text(out / ESCAPE_FILE, _dump_json(diag))
        return RunResult(EXIT_ESCAPE, out, message=str(exc))
    try:
        _write_text(out / CONFIG_FILE, serialize_config(cfg, include_dir=False))
        write_density(out / DENSITY_FILE, series)
        write_trajectories(out / TRAJECTORY_FILE, ens)
        report = build_report(cfg, series, ens)
        doc = report_document(cfg, report, ens)
        _write_text(out / REPORT_FILE, _dump_json(doc))
        prov = {
            "config": {k: v for k, v in cfg.as_dict().items() if k != "dir"},
            "defaults_applied": list(cfg.defaults_applied),
            "overrides": overrides,
            "base_seed": cfg.base_seed,
            "seed_rule": "trajectory i uses base_seed + i",
            "versions": versions(),
            "n_trajectories": int(ens.n),
            "n_escaped": int(np.count_nonzero(ens.escaped)),
            "files": {name: _sha256(out / name)
                      for name in (CONFIG_FILE, DENSITY_FILE, TRAJECTORY_FILE, REPORT_FILE)},
        }
        _write_text(out / PROVENANCE_FILE, _dump_json(prov))
    except OSError as exc:
        return RunResult(EXIT_ARTIFACTS, out, message=f"filesystem error: {exc}")
    code = EXIT_OK if report.passed else EXIT_CHECK_FAILED
    return RunResult(code, out, doc, "\n".join(report.summary_lines()))


def load_run(run_dir):
    run_dir = Path(run_dir)
    cfg_path = run_dir / CONFIG_FILE
    if not cfg_path.is_file():
        raise ArtifactError(f"missing artifact {cfg_path}")
    cfg = parse_config(cfg_path.read_text(encoding="utf-8"))
    series = read_density(run_dir / DENSITY_FILE, cfg)
    ens = read_trajectories(run_dir / TRAJECTORY_FILE, cfg, series.times)
    return cfg, series, ens


def check_run(run_dir) -> RunResult:
    """Recompute the report from the stored artifacts.

    The message notes whether it matches the stored ``report.json``.
    """
    run_dir = Path(run_dir)
    cfg, series, ens = load_run(run_dir)
    report = build_report(cfg, series, ens)
    doc = report_document(cfg, report, ens)
    text = _dump_json(doc)
    stored = run_dir / REPORT_FILE
    if stored.is_file():
        same = stored.read_text(encoding="utf-8") == text
        note = "matches stored report" if same else "DIFFERS from stored report"
    else:
        note = "no stored report to compare"
    lines = report.summary_lines() + [note]
    code = EXIT_OK if report.passed else EXIT_CHECK_FAILED
    return RunResult(code, run_dir, doc, "\n".join(lines))


# ---------------------------------------------------------------- plot data


def emit_plot_data(run_dir) -> dict:
    """Column files for external plotting; returns the manifest.

    ``plot/density_hist_XXXX.csv`` pairs ``|psi_t|^2`` with the ensemble
    histogram (value of the bin containing each grid point);
    ``plot/trajectory_fan.csv`` lists every surviving path at every recorded time.
    """
    run_dir = Path(run_dir)
    cfg, series, ens = load_run(run_dir)
    out = run_dir / PLOT_DIR
    out.mkdir(exist_ok=True)
    grid = series.grid
    alive = ens.survivors
    n_alive = int(np.count_nonzero(alive))
    n_bins = cfg.equivariance_bins
    edges = np.linspace(grid.x_min, grid.x_max, n_bins + 1)
    bin_of = np.minimum(((grid.x - grid.x_min) / (grid.length / n_bins)).astype(int), n_bins - 1)
    files = []
    for j, t in enumerate(series.times):
        cols = [grid.x, series.densities[j]]
        header = "x,rho"
        if n_alive:
            counts, _ = np.histogram(ens.positions[alive, j], bins=edges)
            hist = counts / (n_alive * (grid.length / n_bins))
            cols.append(hist[bin_of])
            header = "x,rho,hist"
            name = f"density_hist_{j:04d}.csv"
        else:
            name = f"density_{j:04d}.csv"
        _write_rows(out / name, header, cols, "%.17g")
        files.append(name)
    idx = np.flatnonzero(alive)
    n_t = series.times.size
    fan = [
        np.tile(series.times, idx.size),
        np.repeat(idx, n_t),
        ens.positions[idx].ravel(),
    ]
    _write_rows(out / "trajectory_fan.csv", "t,trajectory,x", fan, ["%.17g", "%d", "%.17g"])
    files.append("trajectory_fan.csv")
    manifest = {
        "n_snapshots": int(n_t),
        "n_trajectories": int(ens.n),
        "n_survivors": n_alive,
        "histogram_bins": n_bins,
        "histograms_omitted": n_alive == 0,
        "note": "no surviving trajectories; histogram columns omitted" if n_alive == 0 else "",
        "fan_rows": int(n_t * idx.size),
        "files": files,
    }
    _write_text(out / "manifest.json", _dump_json(manifest))
    return manifest
