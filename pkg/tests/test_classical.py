import numpy as np
import pytest

from cqmlab import DensityField, PhysicalConstants, build_grid, density, gaussian_packet
from cqmlab.classical import (
    FreeParticle,
    HarmonicOscillator,
    classical_velocity,
    hbar_scaling_study,
    hj_residual,
    integrate_classical,
    transport_density,
    velocity_convergence,
)

SCENARIOS = [FreeParticle(1.3, 2.0), HarmonicOscillator(1.2, 0.7, 1.5), HarmonicOscillator(2.0)]


@pytest.mark.parametrize("sc", SCENARIOS)
def test_action_solves_hamilton_jacobi(sc):
    q = np.linspace(-3, 3, 41)
    for t in (0.0, 0.3, 0.6):
        assert np.max(np.abs(hj_residual(sc, q, t))) < 1e-10


@pytest.mark.parametrize("sc", SCENARIOS)
def test_characteristics_match_closed_form(sc):
    tr = integrate_classical(sc, 0.8, 0.7, 1e-3)
    assert np.max(np.abs(tr.positions - sc.trajectory(0.8, tr.times))) < 1e-10


@pytest.mark.parametrize("sc", SCENARIOS)
def test_momentum_is_action_gradient(sc):
    q, t, h = np.linspace(-2, 2, 9), 0.4, 1e-6
    fd = (sc.action(q + h, t) - sc.action(q - h, t)) / (2 * h)
    assert np.allclose(fd, sc.momentum(q, t), atol=1e-6)
    assert np.allclose(classical_velocity(sc, q, t), sc.momentum(q, t) / sc.mass)


def test_caustic_rejected():
    ho = HarmonicOscillator(1.0)
    with pytest.raises(ValueError):
        integrate_classical(ho, 0.5, np.pi / 2, 1e-3)
    with pytest.raises(ValueError):
        integrate_classical(ho, np.nan, 0.5, 1e-3)


def test_transport_density_harmonic_oracle():
    # every point of a harmonic well with S0 = 0 moves as q0 cos(wt): width scales by |cos wt|
    g = build_grid(-10.0, 10.0, 512)
    rho0 = density(gaussian_packet(g, 0.0, 1.0))
    t = 0.8
    out = transport_density(HarmonicOscillator(1.0), rho0, t)
    s = np.cos(t)
    exact = np.exp(-g.x**2 / (2 * s**2)) / np.sqrt(2 * np.pi * s**2)
    assert np.max(np.abs(out.values - exact)) < 1e-6
    assert out.integral() == pytest.approx(1.0)


def test_transport_density_free_shift():
    g = build_grid(-10.0, 10.0, 512)
    rho0 = density(gaussian_packet(g, 0.0, 1.0))
    out = transport_density(FreeParticle(1.0), rho0, 1.0)
    exact = density(gaussian_packet(g, 1.0, 1.0)).values
    assert np.max(np.abs(out.values - exact)) < 1e-6
    same = transport_density(FreeParticle(1.0), rho0, 0.0)
    assert np.array_equal(same.values, rho0.values)
    assert isinstance(same, DensityField)


def test_velocity_converges_to_classical():
    dev = velocity_convergence([1.0, 0.5, 0.25, 0.125], t=0.5)
    assert all(a > b for a, b in zip(dev, dev[1:]))


def test_scaling_study_small():
    rep = hbar_scaling_study("harmonic_coherent", [1.0, 0.5], 500, seeds=[1, 2], noise="zero",
                             t_final=0.5, grid=build_grid(-10.0, 10.0, 512))
    assert len(rep.points) == 2
    assert all(p.center_deviation < 1e-4 for p in rep.points)
    assert rep.points[0].deviation > rep.points[1].deviation
    assert rep.as_rows()[0][0] == 1.0


def test_scaling_study_validates():
    with pytest.raises(ValueError):
        hbar_scaling_study("free_gaussian", [0.5, 1.0], 10, seeds=0)
    with pytest.raises(ValueError):
        hbar_scaling_study("free_gaussian", [1.0, 0.5], 10, seeds=[1])
    with pytest.raises(ValueError):
        hbar_scaling_study("square_well", [1.0], 10, seeds=0)
