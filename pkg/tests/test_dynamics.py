import math

import numpy as np
import pytest

from stepdelay import dynamics
from stepdelay.dynamics import (Quadrature, SojournRecord, SplitStep, decay_exponent,
                                evolve_channel, evolve_full, evolve_in_free, evolve_out_free,
                                free_sojourn_prediction, free_sojourn_time, moller_minus,
                                splitting_order, tail_extrapolation)
from stepdelay.potential import make_pure_step, make_smooth_step, make_step_plus_bump
from stepdelay.spectral import canonical_packet, gaussian_state, scatter_state, uniform_grid
from stepdelay.stationary import GridError, scattering_sweep


def moments(phi):
    rho = np.abs(phi.values) ** 2 * phi.dx
    mean = float(np.sum(rho * phi.x))
    return mean, float(np.sum(rho * (phi.x - mean) ** 2))


def l2(a, b):
    return math.sqrt(float(np.sum(np.abs(a.values - b.values) ** 2)) * a.dx)


# -- exact evolutions ---------------------------------------------------------

def test_free_gaussian_spreading():
    # velocity 2 p0, variance s^2 + t^2 / s^2 for H = p^2
    s, p0, t = 2.0, 1.1, 7.0
    phi = gaussian_state(*uniform_grid(4096, 0.1), -20.0, p0, s)
    mean, var = moments(evolve_channel(phi, 0.0, t))
    assert mean == pytest.approx(-20.0 + 2 * p0 * t, abs=1e-9)
    assert var == pytest.approx(s * s + t * t / (s * s), rel=1e-9)


def test_channel_constant_is_a_phase():
    phi = gaussian_state(*uniform_grid(1024, 0.1), 0.0, 1.0, 2.0)
    a = evolve_channel(phi, 0.7, 3.0)
    b = evolve_channel(phi, 0.0, 3.0)
    np.testing.assert_allclose(a.values, np.exp(-0.7j * 3.0) * b.values, atol=1e-13)


def test_in_and_out_free_group_property():
    pk = canonical_packet([(1.5, 2.5)], 0.0, 1.0)
    phi = pk.state
    a = evolve_in_free(evolve_in_free(phi, 0.0, 1.0, 2.5), 0.0, 1.0, -1.0)
    np.testing.assert_allclose(a.values, evolve_in_free(phi, 0.0, 1.0, 1.5).values, atol=1e-12)
    # for a packet with only positive momenta, in-free evolution is H_l evolution
    np.testing.assert_allclose(evolve_in_free(phi, 0.0, 1.0, 4.0).values,
                               evolve_channel(phi, 0.0, 4.0).values, atol=1e-12)
    np.testing.assert_allclose(evolve_out_free(phi, 0.0, 1.0, 4.0).values,
                               evolve_channel(phi, 1.0, 4.0).values, atol=1e-12)


# -- split-step ---------------------------------------------------------------

def test_split_step_exact_for_constant_potential():
    phi = gaussian_state(*uniform_grid(1024, 0.1), 0.0, 1.0, 3.0)
    out = evolve_full(phi, make_pure_step(0.4, 0.4), 2.0, dt=0.01)
    np.testing.assert_allclose(out.values, evolve_channel(phi, 0.4, 2.0).values, atol=1e-11)


def test_strang_splitting_is_second_order():
    phi = gaussian_state(*uniform_grid(1024, 0.1), -10.0, 1.2, 2.0)
    order = splitting_order(phi, make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0), 4.0, 0.02)
    assert 1.9 < order < 2.1


def test_split_step_is_unitary_and_reversible():
    phi = gaussian_state(*uniform_grid(2048, 0.1), -20.0, 1.2, 3.0)
    pot = make_smooth_step(0.0, 1.0, 1.0)
    fwd = evolve_full(phi, pot, 10.0)
    assert fwd.norm2 == pytest.approx(phi.norm2, abs=1e-12)
    back = evolve_full(fwd, pot, -10.0)
    assert l2(back, phi) < 1e-10


def test_leakage_raises_grid_error():
    phi = gaussian_state(*uniform_grid(256, 0.1), 0.0, 1.5, 1.0)
    with pytest.raises(GridError):
        evolve_full(phi, make_pure_step(0.0, 0.0), 8.0)


def test_advance_merges_half_steps():
    phi = gaussian_state(*uniform_grid(512, 0.1), 0.0, 1.0, 2.0)
    pot = make_smooth_step(0.0, 1.0, 1.0)
    prop = SplitStep(pot, phi.x_min, phi.dx, phi.n, 0.01)
    once = prop.advance(phi.values, 10)
    twice = prop.advance(prop.advance(phi.values, 4), 6)
    np.testing.assert_allclose(once, twice, atol=1e-13)


# -- scattering from dynamics -------------------------------------------------

@pytest.fixture(scope="module")
def bump_case():
    pot = make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0)
    pk = canonical_packet([(1.5, 2.5)], 0.0, 1.0, grid=uniform_grid(8192, 0.2))
    data = scattering_sweep(pot, pk.sweep_energies(), with_t=False)
    return pot, pk, data


def test_full_evolution_reproduces_scattering_operator(bump_case):
    # exp(-iHT) exp(-iH_in T) phi  ->  exp(-iH_out T) S phi
    pot, pk, data = bump_case
    t = 60.0
    start = evolve_in_free(pk.state, 0.0, 1.0, -t)
    after = evolve_full(start, pot, 2 * t)
    target = evolve_out_free(scatter_state(pk.state, data), 0.0, 1.0, t)
    assert l2(after, target) < 2e-3


def test_moller_defect_shrinks(bump_case):
    pot, pk, _ = bump_case
    d1 = moller_minus(pk, pot, 15.0).defect
    d2 = moller_minus(pk, pot, 30.0).defect
    assert d2 < d1


# -- quadrature ---------------------------------------------------------------

def test_tail_extrapolation_exact_for_power_law():
    t = np.linspace(1.0, 50.0, 500)
    tail, alpha = tail_extrapolation(t, 3.0 * t ** -2.5)
    assert alpha == pytest.approx(2.5, rel=1e-10)
    assert tail == pytest.approx(3.0 * 50.0 ** -1.5 / 1.5, rel=1e-9)


def test_tail_extrapolation_limits():
    t = np.linspace(1.0, 50.0, 500)
    assert tail_extrapolation(t, np.exp(-t))[0] == 0.0
    assert math.isinf(tail_extrapolation(t, 1.0 / t)[0])


def test_record_integration_of_known_integrand():
    t = np.linspace(-40.0, 40.0, 8001)
    f = 1.0 / (1.0 + t * t) ** 2  # integral pi / 2
    cum = np.column_stack([np.zeros_like(t), f])
    rec = SojournRecord(t, np.array([0.0, 1.0]), {"x": cum}, {"tail_fraction": 0.2})
    val, tail = rec.sojourn("x", 0.0, 1.0)
    assert val == pytest.approx(math.pi / 2, abs=1e-7)
    assert 0 < tail < 1e-4
    pos, _ = rec.sojourn("x", 0.0, 1.0, part="pos")
    assert pos == pytest.approx(math.pi / 4, abs=1e-7)


def test_free_sojourn_identity():
    pk = canonical_packet([(1.2, 2.8)], 0.0, 0.0, grid=uniform_grid(8192, 0.1))
    dyn, tail = free_sojourn_time(pk.state, 0.0, -5.0, 7.0, t_max=60.0)
    pred = free_sojourn_prediction(pk.state, -5.0, 7.0)
    assert dyn == pytest.approx(pred, rel=1e-6)
    assert tail < 1e-6


def test_constant_potential_has_no_delay():
    pot = make_pure_step(0.0, 0.0)
    pk = canonical_packet([(1.5, 2.5)], 0.0, 0.0, grid=uniform_grid(8192, 0.2))
    data = scattering_sweep(pot, pk.sweep_energies(), with_t=False)
    r = np.array([5.0, 10.0, 20.0])
    quad = Quadrature(dynamics.plan_horizon(pk, 20.0))
    curve = dynamics.sojourn_times(pk, pot, data, r, quad)
    np.testing.assert_allclose(curve.t_full, curve.t_in, atol=1e-7)
    np.testing.assert_allclose(curve.t_out, curve.t_in, atol=1e-7)
    assert curve.meta["moller_defect"] < 1e-8


def test_record_rejects_unknown_position():
    rec = SojournRecord(np.arange(5.0), np.array([0.0]), {"a": np.zeros((5, 1))})
    with pytest.raises(KeyError):
        rec.window("a", 0.0, 3.0)


# -- decay estimates ----------------------------------------------------------

def test_decay_exponent_of_power_law():
    t = np.geomspace(10, 100, 12)
    assert decay_exponent(t, 5.0 * t ** -4.2) == pytest.approx(4.2, rel=1e-12)


def test_weighted_mass_decays_like_inverse_fourth_power():
    pk = canonical_packet([(1.5, 2.5)], 0.0, 1.0, grid=uniform_grid(2 ** 15, 0.1))
    t = np.geomspace(100.0, 300.0, 10)
    assert decay_exponent(t, dynamics.weighted_mass(pk.state, t, mu=2.0)) >= 3.9


def test_left_tail_of_positive_momentum_packet_vanishes():
    pk = canonical_packet([(1.5, 2.5)], 0.0, 1.0, grid=uniform_grid(2 ** 15, 0.1))
    t = np.geomspace(60.0, 250.0, 10)
    mass = dynamics.left_tail_mass(pk.state, t)
    assert np.all(np.diff(mass) < 0)
    keep = mass > 1e-12
    assert decay_exponent(t[keep], mass[keep]) >= 4.0
