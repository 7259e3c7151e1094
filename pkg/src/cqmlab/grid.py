"""Periodic spatial grid and physical constants."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Density below this fraction of the maximum is treated as a node.
NODE_EPS = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(
                f"hbar and mass must be strictly positive, got hbar={self.hbar}, mass={self.mass}"
            )

    @property
    def noise_scale(self) -> float:
        """Velocity-noise amplitude sqrt(hbar/m)."""
        return float(np.sqrt(self.hbar / self.mass))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid ``x_k = x_min + k*dx``; ``x_max`` is identified with ``x_min``."""

    x_min: float
    x_max: float
    n_points: int

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def k_nyquist(self) -> float:
        return np.pi / self.dx

    def same_as(self, other: "SpatialGrid") -> bool:
        return (
            self.n_points == other.n_points
            and self.x_min == other.x_min
            and self.x_max == other.x_max
        )


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def build_grid(x_min: float, x_max: float, n_points: int) -> SpatialGrid:
    """Validate and build a spectral grid.

    ``n_points`` must be a power of two no smaller than 16.
    """
    if not (x_max > x_min):
        raise ValueError(f"degenerate interval: x_max={x_max} must exceed x_min={x_min}")
    if int(n_points) != n_points or not _is_power_of_two(int(n_points)):
        raise ValueError(f"n_points={n_points} is not a power of two")
    if n_points < 16:
        raise ValueError(f"n_points={n_points} is below the minimum of 16")
    return SpatialGrid(float(x_min), float(x_max), int(n_points))
