import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqmlab import (
    Free,
    GaussianBarrier,
    Harmonic,
    PhysicalConstants,
    Tabulated,
    WaveField,
    analytic_coherent_state,
    analytic_free_gaussian,
    build_grid,
    density,
    gaussian_packet,
    probability_current,
    propagate,
    step,
)
from cqmlab.propagator import TimeStepError, free_gaussian_width
from cqmlab.wavefunction import spectral_derivative


def l2(a, b, grid):
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * grid.dx))


class TestOracles:
    """The closed forms must solve the Schrodinger equation on their own."""

    def _residual(self, oracle, potential_values, consts, t, h=1e-4):
        # i hbar dpsi/dt - H psi, time derivative by central difference
        p0, pm, pp = oracle(t), oracle(t - h), oracle(t + h)
        g = p0.grid
        dpsi_dt = (pp.amplitudes - pm.amplitudes) / (2 * h)
        lap = spectral_derivative(spectral_derivative(p0.amplitudes, g), g)
        h_psi = -consts.hbar**2 / (2 * consts.mass) * lap + potential_values * p0.amplitudes
        return np.max(np.abs(1j * consts.hbar * dpsi_dt - h_psi))

    def test_free_gaussian_solves_equation(self):
        g = build_grid(-20.0, 20.0, 512)
        c = PhysicalConstants(0.8, 1.2)
        res = self._residual(lambda t: analytic_free_gaussian(g, 0.5, 1.0, 1.0, c, t),
                             0.0, c, 0.7)
        assert res < 1e-7

    def test_coherent_state_solves_equation(self, small_grid):
        c = PhysicalConstants(1.0, 1.0)
        v = Harmonic(1.3).values(small_grid, c)
        res = self._residual(lambda t: analytic_coherent_state(small_grid, 1.0, 1.3, c, t), v, c, 0.4)
        assert res < 1e-6

    def test_oracle_initial_states(self, small_grid, consts):
        a = analytic_free_gaussian(small_grid, 0.3, 1.1, 0.9, consts, 0.0)
        b = gaussian_packet(small_grid, 0.3, 0.9, 1.1)
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-14

    def test_width_formula(self, small_grid, consts):
        psi = analytic_free_gaussian(small_grid, 0.0, 0.0, 1.0, consts, 1.5)
        rho = density(psi).values
        var = np.sum(small_grid.x**2 * rho) * small_grid.dx
        assert np.sqrt(var) == pytest.approx(free_gaussian_width(1.0, consts, 1.5), rel=1e-10)


def test_free_propagation_matches_oracle(consts):
    small_grid = build_grid(-20.0, 20.0, 512)
    psi0 = gaussian_packet(small_grid, -1.0, 1.0, 1.0)
    h = propagate(psi0, Free(), consts, 1.0, 1e-3, 10)
    exact = analytic_free_gaussian(small_grid, -1.0, 1.0, 1.0, consts, 1.0)
    assert l2(h.amplitudes[-1], exact.amplitudes, small_grid) < 1e-10


def test_coherent_state_tracks_oracle(small_grid, consts):
    psi0 = analytic_coherent_state(small_grid, 1.5, 1.0, consts, 0.0)
    h = propagate(psi0, Harmonic(1.0), consts, 1.0, 1e-3, 100)
    for j, t in enumerate(h.times):
        exact = analytic_coherent_state(small_grid, 1.5, 1.0, consts, t)
        assert l2(h.amplitudes[j], exact.amplitudes, small_grid) < 1e-6


def test_step_is_reversible(small_grid, consts):
    psi = gaussian_packet(small_grid, 0.0, 1.0, 1.0)
    pot = GaussianBarrier(2.0, 0.5)
    back = step(step(psi, pot, consts, 0.005), pot, consts, -0.005)
    assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < 1e-13
    assert back.time == pytest.approx(0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=64, max_size=64), st.floats(1e-4, 0.05))
def test_norm_preserved_for_any_potential(table, dt):
    g = build_grid(-8.0, 8.0, 64)
    c = PhysicalConstants()
    psi = gaussian_packet(g, 0.5, 1.0, 1.0)
    out = psi
    for _ in range(5):
        out = step(out, Tabulated(np.array(table)), c, dt)
    assert out.norm() == pytest.approx(psi.norm(), abs=1e-12)


def test_nyquist_guard(consts):
    g = build_grid(-20.0, 20.0, 1024)
    # 2pi limit: hbar k_nyq^2 dt / 2m < 2pi
    limit = 4 * np.pi / g.k_nyquist**2
    step(gaussian_packet(g, 0, 1), Free(), consts, 0.99 * limit)
    with pytest.raises(TimeStepError):
        step(gaussian_packet(g, 0, 1), Free(), consts, 1.01 * limit)


def test_propagate_validates_durations(small_grid, consts):
    psi = gaussian_packet(small_grid, 0, 1)
    with pytest.raises(TimeStepError):
        propagate(psi, Free(), consts, 1.0, 3e-3)
    with pytest.raises(TimeStepError):
        propagate(psi, Free(), consts, 1.0, 5e-3, 7)
    with pytest.raises(TimeStepError):
        propagate(psi, Free(), consts, 1.0, -5e-3)


def test_history_bookkeeping(free_history):
    assert free_history.n_snapshots == 101
    assert free_history.index_of(0.5) == 50
    assert free_history.t_final == pytest.approx(1.0)
    with pytest.raises(ValueError):
        free_history.index_of(0.505)
    series = free_history.density_series(10)
    assert series.times.size == 11
    assert series.index_of(0.3) == 3
    assert series.expectation_position(3) == pytest.approx(free_history.expectation_position(30))


def test_tabulated_length_checked(small_grid, consts):
    with pytest.raises(ValueError):
        Tabulated(np.zeros(5)).values(small_grid, consts)


def _continuity_residual(psi, pot, consts, dt):
    a = step(psi, pot, consts, dt)
    mid = step(psi, pot, consts, dt / 2)
    drho = (density(a).values - density(psi).values) / dt
    div = spectral_derivative(probability_current(mid, consts), psi.grid)
    return float(np.max(np.abs(drho + div)))


@pytest.mark.parametrize("case", ["free", "barrier"])
def test_continuity_second_order(case, consts):
    g = build_grid(-20.0, 20.0, 256)
    if case == "free":
        psi, pot = analytic_free_gaussian(g, 0.0, 1.0, 1.0, consts, 0.5), Free()
    else:
        psi, pot = gaussian_packet(g, -3.0, 1.0, 2.0), GaussianBarrier(2.0, 0.5)
    dts = [0.02, 0.01, 0.005, 0.0025]
    r = [_continuity_residual(psi, pot, consts, d) for d in dts]
    orders = np.log2(np.array(r[:-1]) / np.array(r[1:]))
    assert np.all(orders > 1.95), orders


def test_wavefield_time_advances(small_grid, consts):
    psi = WaveField(small_grid, 1.0, gaussian_packet(small_grid, 0, 1).amplitudes)
    assert step(psi, Free(), consts, 0.005).time == pytest.approx(1.005)
