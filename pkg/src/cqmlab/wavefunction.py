"""Wave-function representation and the pointwise fields derived from it."""

from dataclasses import dataclass

import numpy as np

from .grid import NODE_EPS, PhysicalConstants, SpatialGrid


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: SpatialGrid
    time: float
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise ValueError(
                f"amplitudes have shape {amps.shape}, expected ({self.grid.n_points},)"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        """Discrete L2 norm ``sqrt(sum |psi_k|^2 dx)``."""
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def with_amplitudes(self, amplitudes, time=None) -> "WaveField":
        return WaveField(self.grid, self.time if time is None else time, amplitudes)


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: SpatialGrid
    time: float
    values: np.ndarray

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)


@dataclass(frozen=True, eq=False)
class ActionField:
    """Phase of psi in action units, ``hbar * unwrapped arg(psi)``.

    ``reliable`` is False at nodes, where the phase carries no information and
    unwrapping restarts.
    """

    grid: SpatialGrid
    time: float
    values: np.ndarray
    reliable: np.ndarray


def spectral_derivative(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """First derivative of periodic samples by FFT; the Nyquist mode is dropped."""
    k = grid.k.copy()
    if grid.n_points % 2 == 0:
        k[grid.n_points // 2] = 0.0
    out = np.fft.ifft(1j * k * np.fft.fft(values))
    if np.isrealobj(values):
        return out.real
    return out


def node_mask(rho: np.ndarray, eps: float = NODE_EPS) -> np.ndarray:
    """True where the density is at or above ``eps`` times its maximum."""
    return rho >= eps * np.max(rho)


def normalize(psi: WaveField) -> WaveField:
    n = psi.norm()
    if n == 0.0:
        raise ValueError("cannot normalize an identically zero wave field")
    return psi.with_amplitudes(psi.amplitudes / n)


def density(psi: WaveField) -> DensityField:
    a = psi.amplitudes
    return DensityField(psi.grid, psi.time, a.real**2 + a.imag**2)


def probability_current(psi: WaveField, consts: PhysicalConstants) -> np.ndarray:
    """``J = (hbar/m) Im(conj(psi) dpsi/dx)`` with a spectral gradient."""
    dpsi = spectral_derivative(psi.amplitudes, psi.grid)
    return (consts.hbar / consts.mass) * np.imag(np.conj(psi.amplitudes) * dpsi)


def phase_action(psi: WaveField, consts: PhysicalConstants, eps: float = NODE_EPS) -> ActionField:
    rho = density(psi).values
    reliable = node_mask(rho, eps)
    angle = np.angle(psi.amplitudes)
    phase = angle.copy()
    # unwrap each run of reliable points separately; nodes disconnect the phase
    edges = np.flatnonzero(np.diff(np.concatenate(([0], reliable.astype(np.int8), [0]))))
    for start, stop in zip(edges[0::2], edges[1::2]):
        phase[start:stop] = np.unwrap(angle[start:stop])
    return ActionField(psi.grid, psi.time, consts.hbar * phase, reliable)


def expectation_position(psi: WaveField) -> float:
    rho = density(psi).values
    return float(np.sum(psi.grid.x * rho) * psi.grid.dx)


def gaussian_packet(grid: SpatialGrid, x_c: float, sigma0: float, k0: float = 0.0,
                    time: float = 0.0) -> WaveField:
    """Normalized Gaussian ``exp(-(x-x_c)^2/(4 sigma0^2) + i k0 x)``.

    ``sigma0`` is the standard deviation of the density.
    """
    if sigma0 <= 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    x = grid.x
    amps = (2.0 * np.pi * sigma0**2) ** -0.25 * np.exp(
        -((x - x_c) ** 2) / (4.0 * sigma0**2) + 1j * k0 * x
    )
    return WaveField(grid, time, amps)
