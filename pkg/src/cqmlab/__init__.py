"""Numerical laboratory for wave-guided particle trajectories.

Schrodinger evolution on a periodic 1-D grid, Bohmian and stochastic sample
paths driven by the resulting velocity fields, the classical Hamilton-Jacobi
limit, and ensemble statistics that test the consistency conditions tying the
paths back to the wave function.
"""

__version__ = "0.1.0"

from .grid import PhysicalConstants, SpatialGrid, build_grid
from .wavefunction import (
    ActionField,
    DensityField,
    WaveField,
    density,
    expectation_position,
    gaussian_packet,
    normalize,
    phase_action,
    probability_current,
)
from .propagator import (
    Free,
    GaussianBarrier,
    Harmonic,
    Tabulated,
    WaveHistory,
    analytic_coherent_state,
    analytic_free_gaussian,
    propagate,
    step,
)
from .velocity import VelocityField, bohm_velocity, eval_velocity, osmotic_velocity
from .trajectories import (
    Ensemble,
    EnsembleSpec,
    NelsonOsmotic,
    Trajectory,
    WhiteNoise,
    ZeroNoise,
    compute_G,
    integrate_bohmian,
    integrate_stochastic,
    run_ensemble,
    sample_initial_positions,
)

__all__ = [
    "ActionField",
    "DensityField",
    "Ensemble",
    "EnsembleSpec",
    "Free",
    "GaussianBarrier",
    "Harmonic",
    "NelsonOsmotic",
    "PhysicalConstants",
    "SpatialGrid",
    "Tabulated",
    "Trajectory",
    "VelocityField",
    "WaveField",
    "WaveHistory",
    "WhiteNoise",
    "ZeroNoise",
    "analytic_coherent_state",
    "analytic_free_gaussian",
    "bohm_velocity",
    "build_grid",
    "compute_G",
    "density",
    "eval_velocity",
    "expectation_position",
    "gaussian_packet",
    "integrate_bohmian",
    "integrate_stochastic",
    "normalize",
    "osmotic_velocity",
    "phase_action",
    "probability_current",
    "propagate",
    "run_ensemble",
    "sample_initial_positions",
    "step",
]
