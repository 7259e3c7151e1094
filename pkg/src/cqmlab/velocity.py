"""Current (Bohmian) and osmotic velocity fields and their space-time interpolation."""

from dataclasses import dataclass

import numpy as np

from .grid import NODE_EPS, PhysicalConstants, SpatialGrid
from .wavefunction import WaveField

KINDS = ("current", "osmotic", "forward", "backward")


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: SpatialGrid
    time: float
    values: np.ndarray
    reliability: np.ndarray


def _derivative_rows(amplitudes: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    k = grid.k.copy()
    if grid.n_points % 2 == 0:
        k[grid.n_points // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(amplitudes, axis=-1), axis=-1)


def velocity_tables(amplitudes: np.ndarray, grid: SpatialGrid, consts: PhysicalConstants,
                    eps: float = NODE_EPS):
    """Uncapped current and osmotic velocities for one or many snapshots.

    Returns ``(current, osmotic, reliable)`` arrays shaped like ``amplitudes``.
    The density denominator is floored at ``eps * max(rho)`` per snapshot.
    """
    a = np.atleast_2d(amplitudes)
    da = _derivative_rows(a, grid)
    rho = a.real**2 + a.imag**2
    rho_max = rho.max(axis=-1, keepdims=True)
    reliable = rho >= eps * rho_max
    denom = np.maximum(rho, eps * rho_max)
    flux = np.conj(a) * da
    scale = consts.hbar / consts.mass
    current = scale * flux.imag / denom
    # (hbar/2m) grad(rho)/rho, with grad(rho) = 2 Re(conj(psi) grad psi)
    osmotic = scale * flux.real / denom
    if np.ndim(amplitudes) == 1:
        return current[0], osmotic[0], reliable[0]
    return current, osmotic, reliable


def _capped(values, v_cap):
    if v_cap is None:
        return values
    return np.clip(values, -v_cap, v_cap)


def bohm_velocity(psi: WaveField, consts: PhysicalConstants, v_cap=None) -> VelocityField:
    """``J / rho`` with the density floored at nodes and ``|v|`` clipped to ``v_cap``."""
    current, _, reliable = velocity_tables(psi.amplitudes, psi.grid, consts)
    return VelocityField(psi.grid, psi.time, _capped(current, v_cap), reliable)


def osmotic_velocity(psi: WaveField, consts: PhysicalConstants, v_cap=None) -> VelocityField:
    """``(hbar/2m) grad(rho)/rho`` with the same node handling as ``bohm_velocity``."""
    _, osmotic, reliable = velocity_tables(psi.amplitudes, psi.grid, consts)
    return VelocityField(psi.grid, psi.time, _capped(osmotic, v_cap), reliable)


def cubic_stencil(x, grid: SpatialGrid, wrap: bool = True):
    """Periodic 4-point Lagrange stencil for positions ``x``.

    Returns ``(indices, weights)``: four index arrays (left to right) and the
    matching four weight arrays, each shaped like ``x``. ``wrap=False`` skips
    the periodic index fold and requires ``x`` at least two cells inside the grid.
    """
    s = (np.asarray(x, dtype=float) - grid.x_min) / grid.dx
    i = np.floor(s)
    f = s - i
    i = i.astype(np.int64)
    fm1 = f - 1.0
    fp1 = f + 1.0
    fm2 = f - 2.0
    a = f * fm1
    b = fp1 * fm2
    weights = (-a * fm2 / 6.0, b * fm1 / 2.0, -b * f / 2.0, a * fp1 / 6.0)
    if wrap:
        n = grid.n_points
        indices = ((i - 1) % n, i % n, (i + 1) % n, (i + 2) % n)
    else:
        indices = (i - 1, i, i + 1, i + 2)
    return indices, weights


def _apply_stencil(row, stencil):
    (i0, i1, i2, i3), (w0, w1, w2, w3) = stencil
    return w0 * row[i0] + w1 * row[i1] + w2 * row[i2] + w3 * row[i3]


def interpolate_periodic(values: np.ndarray, x, grid: SpatialGrid) -> np.ndarray:
    return _apply_stencil(values, cubic_stencil(x, grid))


class FieldInterpolator:
    """Cubic-in-space, linear-in-time evaluation of a tabulated field.

    No range checking; callers guarantee ``t`` within the table span.
    """

    def __init__(self, table: np.ndarray, times: np.ndarray, grid: SpatialGrid, v_cap=None):
        self.table = np.atleast_2d(table)
        self.times = np.asarray(times, dtype=float)
        self.grid = grid
        self.v_cap = v_cap
        self.t0 = float(self.times[0])
        self.dt = float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0
        # (key, row) swapped in as one reference so worker threads never see a torn pair
        self._cache = (None, None)

    def time_weights(self, t: float):
        if self.table.shape[0] == 1:
            return 0, 0, 0.0
        r = (t - self.t0) / self.dt
        j = min(max(int(np.floor(r)), 0), self.table.shape[0] - 2)
        return j, j + 1, r - j

    def row(self, t: float) -> np.ndarray:
        """Field on the grid at time ``t`` (linear blend of bracketing snapshots)."""
        key = self.time_weights(t)
        cached_key, row = self._cache
        if key != cached_key:
            j0, j1, a = key
            if a == 0.0:
                row = self.table[j0]
            else:
                row = (1.0 - a) * self.table[j0] + a * self.table[j1]
            self._cache = (key, row)
        return row

    def __call__(self, x, t, stencil=None):
        if stencil is None:
            stencil = cubic_stencil(x, self.grid)
        return _capped(_apply_stencil(self.row(t), stencil), self.v_cap)


def eval_velocity(history, kind: str, x, t: float, v_cap=None):
    """Velocity of the given kind at positions ``x`` and time ``t``.

    ``kind`` is one of ``current``, ``osmotic``, ``forward`` (current + osmotic)
    or ``backward`` (current - osmotic). Returns ``(values, reliable)``; a point
    is reliable when every grid node of its stencil, on both bracketing
    snapshots, is above the node threshold.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown velocity kind {kind!r}; expected one of {KINDS}")
    times = history.times
    span = 1e-12 * max(1.0, abs(times[-1]))
    if not (times[0] - span <= t <= times[-1] + span):
        raise ValueError(f"t={t} outside history span [{times[0]}, {times[-1]}]")
    x_arr = np.asarray(x, dtype=float)
    grid = history.grid
    if np.any(x_arr < grid.x_min) or np.any(x_arr >= grid.x_max):
        raise ValueError(f"x outside grid [{grid.x_min}, {grid.x_max})")
    interp = FieldInterpolator(history.velocity_table(kind), times, grid, v_cap)
    stencil = cubic_stencil(x_arr, grid)
    values = interp(x_arr, t, stencil)
    j0, j1, _ = interp.time_weights(t)
    rel = history.reliability
    reliable = np.ones(np.shape(x_arr), dtype=bool)
    for i in stencil[0]:
        reliable &= rel[j0][i] & rel[j1][i]
    if np.ndim(x) == 0:
        return float(values), bool(reliable)
    return values, reliable
