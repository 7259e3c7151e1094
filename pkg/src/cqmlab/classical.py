"""Probabilistic Hamilton-Jacobi dynamics and the hbar -> 0 comparison.

Only potentials with closed-form action are covered: the free particle and the
harmonic oscillator, both with linear initial action ``S0(q) = p0 q``.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import PhysicalConstants, SpatialGrid
from .propagator import (
    Free,
    Harmonic,
    analytic_coherent_state,
    propagate,
)
from .trajectories import (
    EnsembleSpec,
    Trajectory,
    ZeroNoise,
    check_escape_rate,
    integrate_ensemble,
    noise_from_name,
    sample_initial_positions,
)
from .velocity import bohm_velocity, interpolate_periodic
from .wavefunction import DensityField, density, gaussian_packet


@dataclass(frozen=True)
class FreeParticle:
    p0: float = 0.0
    mass: float = 1.0

    def potential(self, q):
        return np.zeros_like(np.asarray(q, dtype=float))

    def action(self, q, t):
        return self.p0 * q - self.p0**2 * t / (2.0 * self.mass)

    def momentum(self, q, t):
        return np.full_like(np.asarray(q, dtype=float), self.p0)

    def trajectory(self, q0, t):
        return q0 + self.p0 * t / self.mass

    @property
    def t_max(self) -> float:
        return np.inf


@dataclass(frozen=True)
class HarmonicOscillator:
    """Harmonic well with ``S0 = p0 q``; all characteristics focus at ``omega t = pi/2``."""

    omega: float
    p0: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    def potential(self, q):
        return 0.5 * self.mass * self.omega**2 * np.asarray(q, dtype=float) ** 2

    def action(self, q, t):
        w, m = self.omega, self.mass
        tan, cos = np.tan(w * t), np.cos(w * t)
        return -0.5 * m * w * tan * q**2 + self.p0 * q / cos - self.p0**2 * tan / (2.0 * m * w)

    def momentum(self, q, t):
        w = self.omega
        return -self.mass * w * np.tan(w * t) * q + self.p0 / np.cos(w * t)

    def trajectory(self, q0, t):
        w = self.omega
        return q0 * np.cos(w * t) + self.p0 / (self.mass * w) * np.sin(w * t)

    @property
    def t_max(self) -> float:
        return 0.5 * np.pi / self.omega


def classical_velocity(scenario, x, t):
    """Velocity field ``(1/m) dS/dx`` of the closed-form action."""
    return scenario.momentum(x, t) / scenario.mass


def _complex_step(f, z, h=1e-30):
    # exact to rounding for real-analytic f; no subtractive cancellation
    return np.imag(f(z + 1j * h)) / h


def hj_residual(scenario, q, t):
    """Hamilton-Jacobi residual ``dS/dt + (dS/dq)^2/2m + V``.

    Both partials of S are taken by complex-step differentiation of
    ``scenario.action``, independently of the supplied momentum field.
    """
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    s_t = _complex_step(lambda s: scenario.action(q, s), t)
    s_q = _complex_step(lambda z: scenario.action(z, t), q)
    return s_t + s_q**2 / (2.0 * scenario.mass) + scenario.potential(q)


def _rk4(velocity, q0, t_final, dt, sign=1.0):
    n = int(round(t_final / dt))
    if n and abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    q = np.array(q0, dtype=float)
    out = np.empty((n + 1,) + q.shape)
    out[0] = q
    for i in range(n):
        t = sign * i * dt
        h = sign * dt
        k1 = velocity(q, t)
        k2 = velocity(q + 0.5 * h * k1, t + 0.5 * h)
        k3 = velocity(q + 0.5 * h * k2, t + 0.5 * h)
        k4 = velocity(q + h * k3, t + h)
        q = q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = q
    return out


def integrate_classical(scenario, q0: float, t_final: float, dt: float) -> Trajectory:
    """RK4 on ``dq/dt = v(q, t)`` from ``q(0) = q0``."""
    if not np.isfinite(q0):
        raise ValueError("q0 must be finite")
    _check_horizon(scenario, t_final)
    path = _rk4(lambda q, t: classical_velocity(scenario, q, t), float(q0), t_final, dt)
    times = dt * np.arange(path.shape[0])
    return Trajectory(times, path, np.zeros_like(path), float(q0), ZeroNoise())


def _check_horizon(scenario, t):
    if t >= scenario.t_max:
        raise ValueError(f"t={t} reaches the caustic of this scenario at t={scenario.t_max:.6g}")


def transport_density(scenario, rho0: DensityField, t: float, dt: float = 1e-3) -> DensityField:
    """Push ``rho0`` forward along the characteristics to time ``t``.

    Each grid point is traced back to its origin ``q0(x)`` while integrating
    the flow Jacobian ``dq0/dx``; then ``rho(x) = rho0(q0) |dq0/dx|``.
    """
    _check_horizon(scenario, t)
    grid = rho0.grid
    if t == 0:
        return DensityField(grid, 0.0, np.array(rho0.values, dtype=float))
    n = max(1, int(np.ceil(t / dt - 1e-9)))
    h = t / n
    eps = 1e-6

    def rhs(state, s):
        q, jac = state
        dv = (classical_velocity(scenario, q + eps, s) - classical_velocity(scenario, q - eps, s)) / (2 * eps)
        return np.stack((classical_velocity(scenario, q, s), dv * jac))

    state = np.stack((grid.x.astype(float), np.ones(grid.n_points)))
    s = t
    for _ in range(n):
        k1 = rhs(state, s)
        k2 = rhs(state - 0.5 * h * k1, s - 0.5 * h)
        k3 = rhs(state - 0.5 * h * k2, s - 0.5 * h)
        k4 = rhs(state - h * k3, s - h)
        state = state - h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s -= h
    q0, jac = state
    inside = (q0 >= grid.x_min) & (q0 < grid.x_max)
    vals = np.zeros(grid.n_points)
    vals[inside] = np.maximum(interpolate_periodic(np.asarray(rho0.values, float), q0[inside], grid), 0.0)
    vals *= np.abs(jac)
    total = vals.sum() * grid.dx
    if total > 0:
        vals /= total
    return DensityField(grid, t, vals)


# ---------------------------------------------------------------- hbar scaling


@dataclass
class ScalingPoint:
    hbar: float
    deviation: float
    deviation_se: float
    n: int
    escaped: int
    center_deviation: float = float("nan")


@dataclass
class ScalingReport:
    scenario: str
    noise: str
    points: list = field(default_factory=list)
    slope: float = float("nan")
    intercept: float = float("nan")

    def as_rows(self):
        return [(p.hbar, p.deviation, p.deviation_se, p.n, p.escaped, p.center_deviation)
                for p in self.points]


def _fit_loglog(h, d):
    slope, intercept = np.polyfit(np.log(h), np.log(d), 1)
    return float(slope), float(intercept)


def hbar_scaling_study(quantum_scenario: str, hbar_list: Sequence[float], n: int, seeds,
                       noise: str = "white", mass: float = 1.0, sigma0: float = 1.0,
                       p0: float = 0.0, x_c: float = 1.0, omega: float = 1.0,
                       t_final: float = 1.0, dt: float = 1e-3, dt_sub: float = 1e-3,
                       snapshot_every: int = 10, grid: SpatialGrid = None) -> ScalingReport:
    """Deviation of quantum sample paths from their classical limit as hbar shrinks.

    ``quantum_scenario`` is ``free_gaussian`` (compared with a free particle
    with ``S0 = p0 q``; the packet carries ``k0 = p0/hbar``) or
    ``harmonic_coherent`` (compared with a harmonic oscillator with ``S0 = 0``).
    For each hbar the full pipeline runs: propagation, sampling from
    ``|psi0|^2`` and path integration. The deviation of one path is the sup over
    recorded times of ``|X(t) - q(t)|`` with ``q`` the classical path from the
    same start; ``D(hbar)`` is its ensemble mean. ``seeds`` is one base seed per
    hbar, or a single int used for all.
    """
    hbars = np.asarray(hbar_list, dtype=float)
    if np.any(np.diff(hbars) >= 0):
        raise ValueError("hbar_list must be strictly decreasing")
    if np.ndim(seeds) == 0:
        seeds = [int(seeds)] * hbars.size
    if len(seeds) != hbars.size:
        raise ValueError("need one seed per hbar value")
    if grid is None:
        grid = SpatialGrid(-20.0, 20.0, 1024)
    noise_model = noise_from_name(noise)
    method = "rk4" if isinstance(noise_model, ZeroNoise) else "heun"
    report = ScalingReport(quantum_scenario, noise)
    for hbar, seed in zip(hbars, seeds):
        consts = PhysicalConstants(float(hbar), mass)
        if quantum_scenario == "free_gaussian":
            classical = FreeParticle(p0, mass)
            psi0 = gaussian_packet(grid, 0.0, sigma0, p0 / hbar)
            potential = Free()
            center = 0.0
        elif quantum_scenario == "harmonic_coherent":
            classical = HarmonicOscillator(omega, 0.0, mass)
            psi0 = analytic_coherent_state(grid, x_c, omega, consts, 0.0)
            potential = Harmonic(omega)
            center = x_c
        else:
            raise ValueError(f"unknown quantum scenario {quantum_scenario!r}")
        _check_horizon(classical, t_final)
        history = propagate(psi0, potential, consts, t_final, dt, snapshot_every)
        spec = EnsembleSpec(n, int(seed), noise_model, dt_sub)
        r0 = sample_initial_positions(psi0, n, int(seed))
        ens = integrate_ensemble(history, r0, spec, method=method)
        check_escape_rate(ens)
        q = classical.trajectory(r0[:, None], ens.times[None, :])
        alive = ens.survivors
        sup = np.max(np.abs(ens.positions[alive] - q[alive]), axis=1)
        centre_ens = integrate_ensemble(history, np.array([center]),
                                        EnsembleSpec(1, int(seed), ZeroNoise(), dt_sub), method="rk4")
        q_c = classical.trajectory(center, ens.times)
        center_dev = float(np.max(np.abs(centre_ens.positions[0] - q_c)))
        report.points.append(ScalingPoint(
            float(hbar), float(sup.mean()), float(sup.std(ddof=1) / np.sqrt(sup.size)),
            int(sup.size), int(np.count_nonzero(ens.escaped)), center_dev,
        ))
    if len(report.points) >= 2:
        report.slope, report.intercept = _fit_loglog(
            [p.hbar for p in report.points], [p.deviation for p in report.points]
        )
    return report


def velocity_convergence(hbar_list, t: float, omega: float = 1.0, x_c: float = 1.0,
                         mass: float = 1.0, core_fraction: float = 1e-2,
                         grid: SpatialGrid = None):
    """Max |v_quantum - v_classical| over the density core of the coherent state, per hbar.

    The core is where ``|psi|^2`` exceeds ``core_fraction`` of its maximum.
    """
    if grid is None:
        grid = SpatialGrid(-10.0, 10.0, 1024)
    classical = HarmonicOscillator(omega, 0.0, mass)
    out = []
    for hbar in hbar_list:
        consts = PhysicalConstants(float(hbar), mass)
        psi = analytic_coherent_state(grid, x_c, omega, consts, t)
        rho = density(psi).values
        core = rho >= core_fraction * rho.max()
        vq = bohm_velocity(psi, consts).values
        vc = classical_velocity(classical, grid.x, t)
        out.append(float(np.max(np.abs(vq[core] - vc[core]))))
    return out
