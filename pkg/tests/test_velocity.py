import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqmlab import (
    Free,
    PhysicalConstants,
    WaveField,
    analytic_free_gaussian,
    bohm_velocity,
    build_grid,
    eval_velocity,
    normalize,
    osmotic_velocity,
    propagate,
)
from cqmlab.propagator import free_gaussian_width
from cqmlab.velocity import FieldInterpolator, interpolate_periodic


def free_velocity(x, t, x_c, k0, sigma0, c):
    # v = hbar k0/m + (x - center(t)) * sigma'(t)/sigma(t)
    vg = c.hbar * k0 / c.mass
    tau_dot = c.hbar / (2 * c.mass * sigma0**2)
    tau = tau_dot * t
    return vg + (x - x_c - vg * t) * tau * tau_dot / (1 + tau**2)


def test_bohm_velocity_free_gaussian():
    small_grid = build_grid(-20.0, 20.0, 512)
    c = PhysicalConstants(0.9, 1.1)
    psi = analytic_free_gaussian(small_grid, 0.5, 1.0, 1.0, c, 0.8)
    v = bohm_velocity(psi, c)
    core = np.abs(small_grid.x - 0.5 - 0.8 * c.hbar / c.mass) < 4
    exact = free_velocity(small_grid.x, 0.8, 0.5, 1.0, 1.0, c)
    assert np.max(np.abs(v.values[core] - exact[core])) < 1e-9
    assert v.reliability[core].all()


def test_osmotic_velocity_free_gaussian():
    small_grid = build_grid(-20.0, 20.0, 512)
    c = PhysicalConstants(1.0, 2.0)
    t = 0.6
    psi = analytic_free_gaussian(small_grid, 0.0, 0.0, 1.0, c, t)
    u = osmotic_velocity(psi, c)
    s = free_gaussian_width(1.0, c, t)
    exact = -c.hbar / (2 * c.mass) * small_grid.x / s**2
    core = np.abs(small_grid.x) < 4
    assert np.max(np.abs(u.values[core] - exact[core])) < 1e-9


def test_velocity_cap(small_grid, consts):
    psi = analytic_free_gaussian(small_grid, 0.0, 3.0, 1.0, consts, 0.0)
    v = bohm_velocity(psi, consts, v_cap=1.0)
    assert np.max(np.abs(v.values)) <= 1.0


def test_node_flagged_unreliable(small_grid, consts):
    x = small_grid.x
    # odd state: exact node at x = 0
    psi = normalize(WaveField(small_grid, 0.0, x * np.exp(-x**2 / 2)))
    v = bohm_velocity(psi, consts)
    i0 = np.argmin(np.abs(x))
    assert np.all(np.isfinite(v.values))
    assert not v.reliability[i0]
    assert v.reliability[i0 + 20]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-4, 4))
def test_cubic_interpolation_exact_for_cubics(coef, x0):
    g = build_grid(-8.0, 8.0, 64)
    poly = np.polynomial.Polynomial(coef)
    got = interpolate_periodic(poly(g.x), np.array([x0]), g)[0]
    assert got == pytest.approx(poly(x0), abs=1e-9 * (1 + abs(poly(x0))))


def test_interpolation_at_nodes_is_exact(small_grid, rng):
    vals = rng.normal(size=small_grid.n_points)
    assert np.allclose(interpolate_periodic(vals, small_grid.x, small_grid), vals, atol=1e-12)


def test_time_interpolation_linear(small_grid):
    table = np.vstack([np.zeros(small_grid.n_points), np.ones(small_grid.n_points)])
    f = FieldInterpolator(table, np.array([0.0, 1.0]), small_grid)
    assert f(np.array([0.3]), 0.25)[0] == pytest.approx(0.25)


def test_eval_velocity_matches_exact_field(consts):
    g = build_grid(-15.0, 15.0, 512)
    h = propagate(analytic_free_gaussian(g, 0.0, 1.0, 1.0, consts, 0.0), Free(), consts, 1.0,
                  1e-3, 10)
    x = np.linspace(-2, 3, 31)
    for kind_t in (0.5, 0.505, 0.9999):
        v, rel = eval_velocity(h, "current", x, kind_t)
        exact = free_velocity(x, kind_t, 0.0, 1.0, 1.0, consts)
        # time interpolation is linear over 0.01 snapshot spacing
        assert np.max(np.abs(v - exact)) < 1e-5
        assert rel.all()
    fwd, _ = eval_velocity(h, "forward", x, 0.5)
    bwd, _ = eval_velocity(h, "backward", x, 0.5)
    cur, _ = eval_velocity(h, "current", x, 0.5)
    assert np.allclose(0.5 * (fwd + bwd), cur)


def test_eval_velocity_scalar_and_errors(free_history):
    v, rel = eval_velocity(free_history, "current", 0.5, 0.2)
    assert isinstance(v, float) and isinstance(rel, bool)
    with pytest.raises(ValueError):
        eval_velocity(free_history, "sideways", 0.0, 0.2)
    with pytest.raises(ValueError):
        eval_velocity(free_history, "current", 0.0, 2.0)
    with pytest.raises(ValueError):
        eval_velocity(free_history, "current", 50.0, 0.2)
