"""Ensemble statistics: density comparisons and consistency verdicts.

Pass/fail checks use four-standard-error thresholds; every threshold is stored
next to the statistic together with the sample size it was derived from.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .grid import PhysicalConstants, SpatialGrid
from .propagator import propagate
from .trajectories import Ensemble, ZeroNoise, compute_G
from .wavefunction import DensityField, density, gaussian_packet

N_SIGMA = 4.0
MIN_SURVIVORS = 1000
# equivariance TV bound at the reference sample size; scales as 1/sqrt(n)
TV_REFERENCE = 0.02
TV_REFERENCE_N = 100_000
MIN_BIN_COUNT = 50


class UndersampledError(ValueError):
    pass


@dataclass
class CheckEntry:
    check: str
    time: float
    statistic: float
    std_error: float
    threshold: Optional[float]
    n: int
    passed: Optional[bool]
    note: str = ""

    def to_dict(self):
        return asdict(self)


def _entry(check, time, statistic, std_error, threshold, n, note=""):
    passed = bool(abs(statistic) <= threshold)
    return CheckEntry(check, float(time), float(statistic), float(std_error), float(threshold),
                      int(n), passed, note)


def diagnostic(check, time, statistic, n, note="") -> CheckEntry:
    """A reported measurement that carries no pass/fail verdict."""
    return CheckEntry(check, float(time), float(statistic), float("nan"), None, int(n), None, note)


@dataclass
class ConsistencyReport:
    entries: List[CheckEntry] = field(default_factory=list)

    def extend(self, entries):
        self.entries.extend(entries)

    @property
    def verdicts(self):
        return [e for e in self.entries if e.passed is not None]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.verdicts)

    def failures(self):
        return [e for e in self.verdicts if not e.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "n_checks": len(self.verdicts),
            "n_failed": len(self.failures()),
            "entries": [e.to_dict() for e in self.entries],
        }

    def summary_lines(self):
        out = []
        for e in self.entries:
            if e.passed is None:
                out.append(f"DIAG {e.check:<20} t={e.time:<8.4g} value={e.statistic:.4g} {e.note}")
            else:
                tag = "PASS" if e.passed else "FAIL"
                out.append(
                    f"{tag} {e.check:<20} t={e.time:<8.4g} stat={e.statistic:+.3e} "
                    f"thr={e.threshold:.3e} n={e.n}"
                )
        return out


# ---------------------------------------------------------------- densities


def _coarse_grid(grid: SpatialGrid, n_bins: int) -> SpatialGrid:
    if n_bins < 1 or grid.n_points % n_bins:
        raise ValueError(f"n_bins={n_bins} must divide n_points={grid.n_points}")
    return SpatialGrid(grid.x_min, grid.x_max, n_bins)


def histogram_density(positions, grid: SpatialGrid, n_bins: int, time: float = 0.0) -> DensityField:
    """Normalized histogram on ``n_bins`` equal cells spanning the grid."""
    pos = np.asarray(positions, dtype=float)
    pos = pos[np.isfinite(pos)]
    if pos.size == 0:
        raise ValueError("cannot histogram an empty position list")
    coarse = _coarse_grid(grid, n_bins)
    counts, _ = np.histogram(pos, bins=n_bins, range=(grid.x_min, grid.x_max))
    return DensityField(coarse, time, counts / (pos.size * coarse.dx))


def coarsen_density(rho: DensityField, n_bins: int) -> DensityField:
    """Average a grid density over ``n_bins`` cells (periodic trapezoid rule per cell)."""
    grid = rho.grid
    coarse = _coarse_grid(grid, n_bins)
    m = grid.n_points // n_bins
    v = np.asarray(rho.values, dtype=float)
    blocks = v.reshape(n_bins, m)
    right = np.roll(v, -m)[::m]  # first node of the next cell, wrapping
    mass = (blocks.sum(axis=1) - 0.5 * blocks[:, 0] + 0.5 * right) * grid.dx
    return DensityField(coarse, rho.time, mass / coarse.dx)


def total_variation(rho1: DensityField, rho2: DensityField) -> float:
    if not rho1.grid.same_as(rho2.grid):
        raise ValueError("densities live on different grids")
    return float(0.5 * np.sum(np.abs(rho1.values - rho2.values)) * rho1.grid.dx)


def tv_threshold(n: int) -> float:
    return TV_REFERENCE * np.sqrt(TV_REFERENCE_N / n)


# ---------------------------------------------------------------- checks


def _survivor_positions(ensemble: Ensemble, j: int) -> np.ndarray:
    x = ensemble.positions[ensemble.survivors, j]
    if x.size < MIN_SURVIVORS:
        raise UndersampledError(
            f"only {x.size} surviving trajectories; at least {MIN_SURVIVORS} are required"
        )
    return x


def _mean_and_se(x):
    n = x.size
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return float(np.mean(x)), std / np.sqrt(n), n


def check_mean_consistency(ensemble: Ensemble, history, times) -> List[CheckEntry]:
    """Ensemble mean of X(t) against the quantum expectation of position."""
    out = []
    for t in times:
        x = _survivor_positions(ensemble, ensemble.time_index(t))
        mean, se, n = _mean_and_se(x)
        expected = history.expectation_position(history.index_of(t))
        out.append(_entry("mean_consistency", t, mean - expected, se, N_SIGMA * se, n))
    return out


def check_equivariance(ensemble: Ensemble, history, times, n_bins: int = 64) -> List[CheckEntry]:
    """TV distance between the ensemble histogram and ``|psi_t|^2`` on ``n_bins`` cells."""
    out = []
    for t in times:
        x = _survivor_positions(ensemble, ensemble.time_index(t))
        hist = histogram_density(x, history.grid, n_bins, t)
        j = history.index_of(t)
        exact = coarsen_density(DensityField(history.grid, t, history.densities[j]), n_bins)
        tv = total_variation(hist, exact)
        out.append(_entry("equivariance", t, tv, float("nan"), tv_threshold(x.size), x.size,
                          f"{n_bins} bins"))
    return out


def zeta_mean_check(ensemble: Ensemble, times=None) -> List[CheckEntry]:
    """Mean of zeta increments between consecutive recorded times.

    Zero-noise ensembles have zeta identically zero; they are reported with
    the maximum |zeta| as the statistic and a zero threshold.
    """
    idx = range(1, ensemble.times.size) if times is None else [ensemble.time_index(t) for t in times]
    alive = ensemble.survivors
    out = []
    for j in idx:
        if j == 0:
            continue
        if isinstance(ensemble.noise, ZeroNoise):
            z = ensemble.zeta[alive, j]
            out.append(_entry("zeta_mean", ensemble.times[j], float(np.max(np.abs(z), initial=0.0)),
                              0.0, 0.0, z.size, "zero noise: zeta identically zero"))
            continue
        inc = ensemble.zeta[alive, j] - ensemble.zeta[alive, j - 1]
        if inc.size < 2:
            raise UndersampledError("zeta check needs at least two surviving trajectories")
        mean, se, n = _mean_and_se(inc)
        out.append(_entry("zeta_mean", ensemble.times[j], mean, se, N_SIGMA * se, n))
    return out


def G_constraint_check(ensemble: Ensemble, history, times) -> List[CheckEntry]:
    """Weighted mean of G over the start distribution must vanish."""
    out = []
    for t in times:
        g = compute_G(ensemble, history, t)
        se = g.std / np.sqrt(g.n) if g.n else float("nan")
        out.append(_entry("g_constraint", t, g.weighted_mean, se, N_SIGMA * se, g.n))
    return out


# ---------------------------------------------------------------- Markov tests


def _quantile_bins(x, n_bins):
    edges = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
    return edges[1:-1]


def _transition(a, b, na, nb):
    counts = np.zeros((na, nb))
    np.add.at(counts, (a, b), 1.0)
    rows = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)


def _ck_matrix(labels, n_bins):
    l0, l1, l2 = labels
    p10 = _transition(l0, l1, n_bins, n_bins)
    p21 = _transition(l1, l2, n_bins, n_bins)
    p20 = _transition(l0, l2, n_bins, n_bins)
    return p20 - p10 @ p21


def _ck_norm(d):
    return float(np.max(0.5 * np.sum(np.abs(d), axis=1)))


def _ck_labels(ensemble, t0, t1, t2, n_bins):
    if not (t0 < t1 < t2):
        raise ValueError("Chapman-Kolmogorov times must satisfy t0 < t1 < t2")
    cols = [ensemble.time_index(t) for t in (t0, t1, t2)]
    x = ensemble.positions[ensemble.survivors][:, cols]
    n = x.shape[0]
    if n < n_bins * MIN_BIN_COUNT:
        raise UndersampledError(
            f"{n} surviving trajectories cannot fill {n_bins} bins with {MIN_BIN_COUNT} samples each"
        )
    labels = []
    for c in range(3):
        labels.append(np.searchsorted(_quantile_bins(x[:, c], n_bins), x[:, c], side="right"))
    counts = np.bincount(labels[1], minlength=n_bins)
    visited = counts[counts > 0]
    if visited.size and visited.min() < MIN_BIN_COUNT:
        raise UndersampledError(
            f"a visited bin at t1 holds only {visited.min()} samples (need {MIN_BIN_COUNT}); "
            "use fewer bins or more trajectories"
        )
    return labels, n


def chapman_kolmogorov_residual(ensemble: Ensemble, t0: float, t1: float, t2: float,
                                n_bins: int = 10) -> float:
    """Max-row half-L1 norm of ``P(t2<-t0) - P(t1<-t0) P(t2<-t1)``.

    Bins are equal-probability cells of each time's marginal, so every bin
    holds about ``n / n_bins`` samples.
    """
    labels, _ = _ck_labels(ensemble, t0, t1, t2, n_bins)
    return _ck_norm(_ck_matrix(labels, n_bins))


@dataclass
class CKResult:
    residual: float
    noise_floor: float
    bootstrap_mean: float
    bootstrap_std: float
    n: int
    n_bins: int

    @property
    def below_floor(self) -> bool:
        return self.residual <= self.noise_floor


def ck_bootstrap(ensemble: Ensemble, t0, t1, t2, n_bins=10, n_boot=200, seed=0) -> CKResult:
    """CK residual with a bootstrap estimate of its sampling-noise floor.

    Trajectories are resampled with replacement (bins held fixed). The floor is
    the mean plus four standard deviations of the residual of the centered
    replicates ``D* - D``, i.e. what pure resampling noise produces around the
    observed kernel mismatch.
    """
    labels, n = _ck_labels(ensemble, t0, t1, t2, n_bins)
    d = _ck_matrix(labels, n_bins)
    rng = np.random.default_rng([seed, 0xC4])
    reps = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        d_star = _ck_matrix([lab[idx] for lab in labels], n_bins)
        reps[b] = _ck_norm(d_star - d)
    mean, std = float(reps.mean()), float(reps.std(ddof=1))
    return CKResult(_ck_norm(d), mean + N_SIGMA * std, mean, std, n, n_bins)


def markov_obstruction_demo(consts: PhysicalConstants, potential, t: float, k0: float = 2.0,
                            sigma0: float = 1.0, x_c: float = 0.0, grid: SpatialGrid = None,
                            dt: float = 1e-3) -> float:
    """TV distance at time ``t`` between two states with identical initial densities.

    The states differ only by the phase factor ``exp(i k0 x)``. A nonzero
    result exhibits two equal input densities mapped to different output
    densities, which no density-to-density transition kernel can do.
    """
    if grid is None:
        grid = SpatialGrid(-20.0, 20.0, 1024)
    psi1 = gaussian_packet(grid, x_c, sigma0, 0.0)
    psi2 = psi1.with_amplitudes(psi1.amplitudes * np.exp(1j * k0 * grid.x))
    if t == 0:
        rho1 = density(psi1).values
        rho2 = density(psi2).values
    else:
        n_steps = max(1, int(np.ceil(t / dt - 1e-9)))
        step_dt = t / n_steps
        h1 = propagate(psi1, potential, consts, t, step_dt, n_steps)
        h2 = propagate(psi2, potential, consts, t, step_dt, n_steps)
        rho1, rho2 = h1.densities[-1], h2.densities[-1]
    return float(0.5 * np.sum(np.abs(rho1 - rho2)) * grid.dx)


def tv_drift(ensemble: Ensemble, history, times, n_bins: int = 64) -> List[CheckEntry]:
    """TV between ensemble histogram and ``|psi_t|^2`` reported without a verdict."""
    out = []
    for t in times:
        x = _survivor_positions(ensemble, ensemble.time_index(t))
        hist = histogram_density(x, history.grid, n_bins, t)
        exact = coarsen_density(
            DensityField(history.grid, t, history.densities[history.index_of(t)]), n_bins
        )
        out.append(diagnostic("tv_drift", t, total_variation(hist, exact), x.size,
                              f"{ensemble.noise.name} noise, {n_bins} bins"))
    return out
