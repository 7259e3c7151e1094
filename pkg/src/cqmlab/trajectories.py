"""Sample paths guided by a wave history: Bohmian and stochastic integrators.

Every trajectory owns a random stream seeded with ``base_seed + index``, and
ensembles are integrated in fixed-size chunks, so results do not depend on how
chunks are scheduled across workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .grid import NODE_EPS
from .velocity import FieldInterpolator, cubic_stencil, interpolate_periodic
from .wavefunction import WaveField, density

CHUNK_SIZE = 4096
MAX_ESCAPE_FRACTION = 1e-3
WORKERS_ENV = "CQMLAB_WORKERS"


class EscapeRateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ZeroNoise:
    name = "zero"
    drift = "current"

    def scale(self, consts) -> float:
        return 0.0


@dataclass(frozen=True)
class WhiteNoise:
    """Gaussian velocity noise of amplitude sqrt(hbar/m) on top of the current velocity."""

    name = "white"
    drift = "current"

    def scale(self, consts) -> float:
        return consts.noise_scale


@dataclass(frozen=True)
class NelsonOsmotic:
    """Markov diffusion with forward drift (current + osmotic), amplitude sqrt(hbar/m)."""

    name = "nelson"
    drift = "forward"

    def scale(self, consts) -> float:
        return consts.noise_scale


NoiseModel = Union[ZeroNoise, WhiteNoise, NelsonOsmotic]

NOISE_MODELS = {"zero": ZeroNoise, "white": WhiteNoise, "nelson": NelsonOsmotic}


def noise_from_name(name: str) -> NoiseModel:
    try:
        return NOISE_MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown noise model {name!r}; expected one of {sorted(NOISE_MODELS)}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    zeta: np.ndarray
    initial_position: float
    noise: NoiseModel = field(default_factory=ZeroNoise)
    rng_seed: Optional[int] = None
    escaped: bool = False


@dataclass(frozen=True)
class EnsembleSpec:
    n_trajectories: int
    base_seed: int = 0
    noise: NoiseModel = field(default_factory=ZeroNoise)
    dt_sub: float = 1e-3

    def __post_init__(self):
        if self.n_trajectories < 0:
            raise ValueError("n_trajectories must be nonnegative")
        if not self.dt_sub > 0:
            raise ValueError("dt_sub must be positive")

    def seed(self, index: int) -> int:
        return self.base_seed + index


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Recorded paths of many trajectories sharing one wave history.

    ``positions`` and ``zeta`` have shape ``(n, n_times)``; entries after a
    trajectory escapes are NaN.
    """

    times: np.ndarray
    positions: np.ndarray
    zeta: np.ndarray
    initial_positions: np.ndarray
    seeds: np.ndarray
    escaped: np.ndarray
    noise: NoiseModel

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def survivors(self) -> np.ndarray:
        return ~self.escaped

    @property
    def n_survivors(self) -> int:
        return int(np.count_nonzero(~self.escaped))

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a recorded time")
        return j

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            self.times,
            self.positions[i],
            self.zeta[i],
            float(self.initial_positions[i]),
            self.noise,
            int(self.seeds[i]),
            bool(self.escaped[i]),
        )


# ---------------------------------------------------------------- sampling


def _cdf_nodes(psi0: WaveField):
    rho = density(psi0).values
    grid = psi0.grid
    nodes = np.append(grid.x, grid.x_max)
    rho_ext = np.append(rho, rho[0])
    mass = 0.5 * (rho_ext[:-1] + rho_ext[1:]) * grid.dx
    cdf = np.concatenate(([0.0], np.cumsum(mass)))
    return nodes, cdf, mass


def inverse_cdf(psi0: WaveField, u) -> np.ndarray:
    """Map uniforms in [0, 1) to positions through the trapezoid CDF of ``|psi0|^2``."""
    nodes, cdf, mass = _cdf_nodes(psi0)
    target = np.asarray(u, dtype=float) * cdf[-1]
    cell = np.searchsorted(cdf, target, side="right") - 1
    cell = np.clip(cell, 0, mass.size - 1)
    frac = (target - cdf[cell]) / mass[cell]
    return nodes[cell] + frac * psi0.grid.dx


def sample_initial_positions(psi0: WaveField, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` positions from ``|psi0|^2``; zero-mass cells are never selected."""
    rng = np.random.default_rng([seed, 0x5A17])
    return inverse_cdf(psi0, rng.random(n))


# ---------------------------------------------------------------- integration


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _substeps(history, dt_sub: float, record_stride: int) -> int:
    if history.n_snapshots == 1:
        return 1
    span = history.dt_snapshot * record_stride
    k = int(round(span / dt_sub))
    if k < 1 or abs(k * dt_sub - span) > 1e-9 * span:
        raise ValueError(
            f"dt_sub={dt_sub} must divide the recording interval {span} evenly"
        )
    return k


def _domain(grid):
    # a point at x_max - 3dx still has its right stencil node at index n - 1
    margin = 3.0 * grid.dx
    return grid.x_min + margin, grid.x_max - margin


class _Integrator:
    """Shared state for integrating a chunk of trajectories against one history."""

    def __init__(self, history, drift_kind, dt_sub, record_stride, noise_scale):
        grid = history.grid
        self.history = history
        self.lo, self.hi = _domain(grid)
        self.v_cap = grid.dx / dt_sub
        self.n_rec = (history.n_snapshots - 1) // record_stride + 1
        self.k = _substeps(history, dt_sub, record_stride)
        self.dt = (history.dt_snapshot * record_stride) / self.k
        self.t0 = history.t0
        self.times = history.t0 + history.dt_snapshot * record_stride * np.arange(self.n_rec)
        current = history.velocity_table("current")
        self.current = FieldInterpolator(current, history.times, grid, self.v_cap)
        if drift_kind == "current":
            self.drift = None
        else:
            self.drift = FieldInterpolator(
                history.velocity_table(drift_kind), history.times, grid, self.v_cap
            )
        self.sigma = noise_scale

    def _clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def velocities(self, x, t):
        stencil = cubic_stencil(x, self.history.grid, wrap=False)
        v = self.current(x, t, stencil)
        b = v if self.drift is None else self.drift(x, t, stencil)
        return b, v

    def rk4(self, r0):
        x = np.array(r0, dtype=float)
        n = x.size
        pos = np.full((n, self.n_rec), np.nan)
        pos[:, 0] = x
        escaped = (x < self.lo) | (x > self.hi)
        dt = self.dt
        t = self.t0
        grid = self.history.grid

        def f(y, t):
            return self.current(y, t, cubic_stencil(y, grid, wrap=False))

        for j in range(1, self.n_rec):
            for s in range(self.k):
                t = self.t0 + ((j - 1) * self.k + s) * dt
                xc = self._clip(x)
                k1 = f(xc, t)
                k2 = f(self._clip(xc + 0.5 * dt * k1), t + 0.5 * dt)
                k3 = f(self._clip(xc + 0.5 * dt * k2), t + 0.5 * dt)
                k4 = f(self._clip(xc + dt * k3), t + dt)
                x_new = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                x = np.where(escaped, x, x_new)
                escaped |= (x < self.lo) | (x > self.hi)
            pos[:, j] = np.where(escaped, np.nan, x)
        return pos, np.where(np.isnan(pos), np.nan, 0.0), escaped

    def heun(self, r0, seeds):
        x = np.array(r0, dtype=float)
        n = x.size
        n_steps = (self.n_rec - 1) * self.k
        if self.sigma > 0.0:
            xi = np.empty((n, n_steps))
            for i, s in enumerate(seeds):
                xi[i] = np.random.default_rng(int(s)).standard_normal(n_steps)
            xi *= self.sigma * np.sqrt(self.dt)
        else:
            xi = None
        pos = np.full((n, self.n_rec), np.nan)
        zeta_rec = np.full((n, self.n_rec), np.nan)
        pos[:, 0] = x
        zeta_rec[:, 0] = 0.0
        zeta = np.zeros(n)
        escaped = (x < self.lo) | (x > self.hi)
        dt = self.dt
        for j in range(1, self.n_rec):
            for s in range(self.k):
                m = (j - 1) * self.k + s
                t = self.t0 + m * dt
                xc = self._clip(x)
                b0, _ = self.velocities(xc, t)
                kick = 0.0 if xi is None else xi[:, m]
                x_pred = xc + b0 * dt + kick
                b_mid, v_mid = self.velocities(self._clip(0.5 * (xc + x_pred)), t + 0.5 * dt)
                x_new = x + b_mid * dt + kick
                # zeta increment: displacement minus the current-velocity part
                dz = (b_mid - v_mid) * dt + kick
                x = np.where(escaped, x, x_new)
                zeta = np.where(escaped, zeta, zeta + dz)
                escaped |= (x < self.lo) | (x > self.hi)
            pos[:, j] = np.where(escaped, np.nan, x)
            zeta_rec[:, j] = np.where(escaped, np.nan, zeta)
        return pos, zeta_rec, escaped


def _check_r0(history, r0):
    lo, hi = _domain(history.grid)
    r = np.asarray(r0, dtype=float)
    if np.any(r < history.grid.x_min) or np.any(r >= history.grid.x_max):
        raise ValueError(f"initial position outside grid [{history.grid.x_min}, {history.grid.x_max})")
    return r


def integrate_bohmian(history, r0: float, dt_sub: float, record_stride: int = 1) -> Trajectory:
    """Deterministic path ``dx/dt = v(x, t)`` by classical RK4."""
    r = _check_r0(history, r0)
    integ = _Integrator(history, "current", dt_sub, record_stride, 0.0)
    pos, zeta, escaped = integ.rk4(np.atleast_1d(r))
    return Trajectory(integ.times, pos[0], zeta[0], float(r), ZeroNoise(), None, bool(escaped[0]))


def integrate_stochastic(history, r0: float, noise: NoiseModel, dt_sub: float, seed: int,
                         record_stride: int = 1) -> Trajectory:
    """One sample path of ``dX = b(X,t) dt + sqrt(hbar/m) dW`` by the midpoint Heun scheme.

    The drift is evaluated at the average of the start point and an Euler
    predictor; ``zeta`` records ``X - r0 - int v dt`` with the integral taken on
    the same midpoints, so it is identically zero for ``ZeroNoise``.
    """
    r = _check_r0(history, r0)
    integ = _Integrator(history, noise.drift, dt_sub, record_stride, noise.scale(history.consts))
    pos, zeta, escaped = integ.heun(np.atleast_1d(r), [seed])
    return Trajectory(integ.times, pos[0], zeta[0], float(r), noise, seed, bool(escaped[0]))


def integrate_ensemble(history, r0, spec: EnsembleSpec, record_stride: int = 1,
                       method: str = "heun", workers: Optional[int] = None) -> Ensemble:
    """Integrate trajectories from the given starting points in fixed chunks.

    ``method="rk4"`` runs the deterministic Bohmian integrator (noise must be
    ``ZeroNoise``); otherwise the midpoint Heun scheme with ``spec.noise``.
    """
    r0 = _check_r0(history, r0)
    n = r0.size
    seeds = spec.base_seed + np.arange(n, dtype=np.int64)
    if method == "rk4" and not isinstance(spec.noise, ZeroNoise):
        raise ValueError("rk4 integration is only defined for ZeroNoise")
    integ = _Integrator(
        history, spec.noise.drift, spec.dt_sub, record_stride, spec.noise.scale(history.consts)
    )
    chunks = [slice(a, min(a + CHUNK_SIZE, n)) for a in range(0, n, CHUNK_SIZE)]

    def run(sl):
        if method == "rk4":
            return integ.rk4(r0[sl])
        return integ.heun(r0[sl], seeds[sl])

    workers = _workers() if workers is None else workers
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(sl) for sl in chunks]
    if parts:
        pos = np.concatenate([p[0] for p in parts])
        zeta = np.concatenate([p[1] for p in parts])
        escaped = np.concatenate([p[2] for p in parts])
    else:
        pos = np.empty((0, integ.n_rec))
        zeta = np.empty((0, integ.n_rec))
        escaped = np.zeros(0, dtype=bool)
    return Ensemble(integ.times, pos, zeta, r0, seeds, escaped, spec.noise)


def run_ensemble(history, spec: EnsembleSpec, record_stride: int = 1, method: str = "heun",
                 workers: Optional[int] = None, max_escape: float = MAX_ESCAPE_FRACTION) -> Ensemble:
    """Sample starts from the first snapshot and integrate the whole ensemble.

    Raises ``EscapeRateError`` if more than ``max_escape`` of the paths reach
    the domain boundary.
    """
    r0 = sample_initial_positions(history.snapshot(0), spec.n_trajectories, spec.base_seed)
    ens = integrate_ensemble(history, r0, spec, record_stride, method, workers)
    check_escape_rate(ens, max_escape)
    return ens


def check_escape_rate(ens: Ensemble, max_escape: float = MAX_ESCAPE_FRACTION):
    if ens.n == 0:
        return
    frac = np.count_nonzero(ens.escaped) / ens.n
    if frac > max_escape:
        raise EscapeRateError(
            f"{np.count_nonzero(ens.escaped)} of {ens.n} trajectories ({frac:.2%}) reached the "
            f"domain boundary (limit {max_escape:.2%}); enlarge the grid or shorten t_final"
        )


# ---------------------------------------------------------------- G diagnostic


def density_at(history, j: int, x) -> np.ndarray:
    """Cubic interpolation of the snapshot density, clipped at zero."""
    return np.maximum(interpolate_periodic(history.densities[j], x, history.grid), 0.0)


@dataclass(frozen=True, eq=False)
class GResult:
    time: float
    values: np.ndarray
    valid: np.ndarray
    weighted_mean: float
    std: float
    n: int


def compute_G(ensemble: Ensemble, history, t: float, eps: float = NODE_EPS) -> GResult:
    """``G(t; r0) = X(t; r0) - r0 |psi(r0,t)|^2 / |psi0(r0)|^2`` per trajectory.

    Since ``r0`` is distributed as ``|psi0|^2``, the plain ensemble mean of ``G``
    estimates the ``|psi0|^2``-weighted integral, which must vanish.
    Trajectories whose start density is below ``eps * max`` are excluded.
    """
    j_hist = history.index_of(t)
    j_ens = ensemble.time_index(t)
    r0 = ensemble.initial_positions
    rho0 = density_at(history, 0, r0)
    rho_t = density_at(history, j_hist, r0)
    valid = ensemble.survivors & (rho0 >= eps * history.densities[0].max())
    g = np.full(ensemble.n, np.nan)
    g[valid] = ensemble.positions[valid, j_ens] - r0[valid] * (rho_t[valid] / rho0[valid])
    n = int(np.count_nonzero(valid))
    mean = float(np.mean(g[valid])) if n else float("nan")
    std = float(np.std(g[valid], ddof=1)) if n > 1 else 0.0
    return GResult(float(t), g, valid, mean, std, n)
