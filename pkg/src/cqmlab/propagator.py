"""Split-operator Schrodinger propagation and closed-form reference solutions."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .grid import PhysicalConstants, SpatialGrid
from .wavefunction import WaveField

# Largest kinetic phase a single step may rotate the Nyquist mode by.
MAX_NYQUIST_PHASE = 2.0 * np.pi


class TimeStepError(ValueError):
    pass


@dataclass(frozen=True)
class Free:
    def values(self, grid: SpatialGrid, consts: PhysicalConstants) -> np.ndarray:
        return np.zeros(grid.n_points)


@dataclass(frozen=True)
class Harmonic:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    def values(self, grid, consts):
        return 0.5 * consts.mass * self.omega**2 * grid.x**2


@dataclass(frozen=True)
class GaussianBarrier:
    height: float
    width: float
    center: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"barrier width must be positive, got {self.width}")

    def values(self, grid, consts):
        return self.height * np.exp(-((grid.x - self.center) ** 2) / (2.0 * self.width**2))


@dataclass(frozen=True, eq=False)
class Tabulated:
    table: np.ndarray

    def values(self, grid, consts):
        v = np.asarray(self.table, dtype=float)
        if v.shape != (grid.n_points,):
            raise ValueError(f"tabulated potential has length {v.size}, grid has {grid.n_points}")
        return v


Potential = Union[Free, Harmonic, GaussianBarrier, Tabulated]


class _Stepper:
    """Precomputed Strang factors for a fixed (grid, potential, dt)."""

    def __init__(self, grid, potential, consts, dt):
        if dt == 0:
            raise TimeStepError("dt must be nonzero")
        phase = consts.hbar * grid.k_nyquist**2 * abs(dt) / (2.0 * consts.mass)
        if phase >= MAX_NYQUIST_PHASE:
            raise TimeStepError(
                f"dt={dt} rotates the Nyquist mode by {phase:.3f} rad per step "
                f"(limit {MAX_NYQUIST_PHASE:.3f}); reduce dt or coarsen the grid"
            )
        v = potential.values(grid, consts)
        self.half_potential = np.exp(-0.5j * v * dt / consts.hbar)
        self.kinetic = np.exp(-0.5j * consts.hbar * grid.k**2 * dt / consts.mass)

    def __call__(self, amps):
        amps = self.half_potential * amps
        amps = np.fft.ifft(self.kinetic * np.fft.fft(amps))
        return self.half_potential * amps


def step(psi: WaveField, potential, consts: PhysicalConstants, dt: float) -> WaveField:
    """One Strang step: half potential, full kinetic, half potential.

    Negative ``dt`` steps backwards in time.
    """
    stepper = _Stepper(psi.grid, potential, consts, dt)
    return psi.with_amplitudes(stepper(psi.amplitudes), time=psi.time + dt)


def _snapshot_index(times, t):
    if times.size == 1:
        j = 0
    else:
        j = int(round((t - times[0]) / (times[1] - times[0])))
    if not (0 <= j < times.size) or abs(times[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a snapshot time of this history")
    return j


@dataclass(frozen=True, eq=False)
class DensitySeries:
    """Densities ``|psi|^2`` at uniformly spaced times, without phases.

    Enough to evaluate every ensemble check; rebuilt from stored run artifacts.
    """

    grid: SpatialGrid
    times: np.ndarray
    densities: np.ndarray

    def index_of(self, t: float) -> int:
        return _snapshot_index(self.times, t)

    def expectation_position(self, j: int) -> float:
        return float(np.sum(self.grid.x * self.densities[j]) * self.grid.dx)


@dataclass(frozen=True, eq=False)
class WaveHistory:
    """Snapshots of psi at uniformly spaced times ``t0 + j*dt_snapshot``.

    ``amplitudes`` has shape ``(n_snapshots, n_points)``.
    """

    grid: SpatialGrid
    amplitudes: np.ndarray
    t0: float
    dt_snapshot: float
    consts: PhysicalConstants
    potential: object = field(default_factory=Free)

    @property
    def n_snapshots(self) -> int:
        return self.amplitudes.shape[0]

    @cached_property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_snapshot * np.arange(self.n_snapshots)

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def snapshot(self, j: int) -> WaveField:
        return WaveField(self.grid, float(self.times[j]), self.amplitudes[j])

    @property
    def snapshots(self) -> list:
        return [self.snapshot(j) for j in range(self.n_snapshots)]

    def index_of(self, t: float) -> int:
        """Index of the snapshot at time ``t``; raises if ``t`` is not a snapshot time."""
        return _snapshot_index(self.times, t)

    def expectation_position(self, j: int) -> float:
        return float(np.sum(self.grid.x * self.densities[j]) * self.grid.dx)

    def density_series(self, stride: int = 1) -> DensitySeries:
        return DensitySeries(self.grid, self.times[::stride].copy(), self.densities[::stride].copy())

    @cached_property
    def densities(self) -> np.ndarray:
        a = self.amplitudes
        return a.real**2 + a.imag**2

    @cached_property
    def _fields(self):
        # current and osmotic velocity tables (uncapped) plus reliability, per snapshot
        from .velocity import velocity_tables

        return velocity_tables(self.amplitudes, self.grid, self.consts)

    def velocity_table(self, kind: str) -> np.ndarray:
        current, osmotic, _ = self._fields
        if kind == "current":
            return current
        if kind == "osmotic":
            return osmotic
        if kind == "forward":
            return current + osmotic
        if kind == "backward":
            return current - osmotic
        raise ValueError(f"unknown velocity kind {kind!r}")

    @property
    def reliability(self) -> np.ndarray:
        return self._fields[2]


def _n_steps(total: float, dt: float, what: str) -> int:
    n = int(round(total / dt))
    if abs(n * dt - total) > 1e-9 * max(1.0, abs(total)):
        raise TimeStepError(f"{what}={total} is not an integer multiple of dt={dt}")
    return n


def propagate(psi0: WaveField, potential, consts: PhysicalConstants, t_final: float,
              dt: float, snapshot_every: int = 1) -> WaveHistory:
    """Evolve ``psi0`` to ``t_final`` and keep every ``snapshot_every``-th state.

    The first snapshot is ``psi0`` itself. ``t_final`` must be a whole number of
    snapshot intervals.
    """
    if dt <= 0:
        raise TimeStepError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be at least 1")
    n_steps = _n_steps(t_final, dt, "t_final")
    if n_steps % snapshot_every:
        raise TimeStepError(
            f"{n_steps} steps do not divide into snapshots every {snapshot_every} steps"
        )
    stepper = _Stepper(psi0.grid, potential, consts, dt)
    n_snap = n_steps // snapshot_every + 1
    out = np.empty((n_snap, psi0.grid.n_points), dtype=complex)
    amps = psi0.amplitudes.copy()
    out[0] = amps
    for j in range(1, n_snap):
        for _ in range(snapshot_every):
            amps = stepper(amps)
        out[j] = amps
    out.flags.writeable = False
    return WaveHistory(psi0.grid, out, psi0.time, dt * snapshot_every, consts, potential)


def analytic_free_gaussian(grid: SpatialGrid, x_c: float, k0: float, sigma0: float,
                           consts: PhysicalConstants, t: float) -> WaveField:
    """Exact free evolution of ``gaussian_packet(grid, x_c, sigma0, k0)``.

    Density width grows as ``sigma0*sqrt(1 + (hbar t / 2 m sigma0^2)^2)`` while
    the center moves with velocity ``hbar k0 / m``.
    """
    if sigma0 <= 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    hbar, m = consts.hbar, consts.mass
    alpha = 1.0 + 1j * hbar * t / (2.0 * m * sigma0**2)
    y = grid.x - x_c - hbar * k0 * t / m
    amps = (
        (2.0 * np.pi * sigma0**2) ** -0.25
        / np.sqrt(alpha)
        * np.exp(-(y**2) / (4.0 * sigma0**2 * alpha) + 1j * k0 * grid.x - 0.5j * hbar * k0**2 * t / m)
    )
    return WaveField(grid, t, amps)


def free_gaussian_width(sigma0: float, consts: PhysicalConstants, t: float) -> float:
    tau = consts.hbar * t / (2.0 * consts.mass * sigma0**2)
    return sigma0 * float(np.sqrt(1.0 + tau**2))


def analytic_coherent_state(grid: SpatialGrid, x_c: float, omega: float,
                            consts: PhysicalConstants, t: float) -> WaveField:
    """Displaced harmonic ground state released from rest at ``x_c``.

    Rigid Gaussian of density width ``sqrt(hbar/(2 m omega))`` centered on
    ``x_c cos(omega t)``.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    hbar, m = consts.hbar, consts.mass
    q = x_c * np.cos(omega * t)
    p = -m * omega * x_c * np.sin(omega * t)
    x = grid.x
    amps = (m * omega / (np.pi * hbar)) ** 0.25 * np.exp(
        -m * omega * (x - q) ** 2 / (2.0 * hbar)
        + 1j * p * (x - 0.5 * q) / hbar
        - 0.5j * omega * t
    )
    return WaveField(grid, t, amps)
