import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stepdelay.potential import make_custom, make_pure_step, make_smooth_step, make_step_plus_bump
from stepdelay.stationary import (AbsentEntryError, CertificateError, GridError, SpatialGrid,
                                  ThresholdError, ew_matrix, ew_matrix_at, jost_left, jost_right,
                                  s_matrix_at, scattering_sweep, wronskian)


# -- transfer-matrix oracle for piecewise-constant potentials -----------------

def _right_incoming_coeffs(levels, edges, energy):
    """Coefficients (a, b) of the right Jost solution on the leftmost region.

    ``levels`` holds the constant values on the regions separated by ``edges``.
    The solution is exp(i k_N x) on the last region and a exp(i k_0 x) +
    b exp(-i k_0 x) on the first one.
    """
    ks = [cmath.sqrt(energy - v) for v in levels]
    a, b = 1.0 + 0j, 0j
    for j in range(len(edges) - 1, -1, -1):
        x, k1, k0 = edges[j], ks[j + 1], ks[j]
        val = a * cmath.exp(1j * k1 * x) + b * cmath.exp(-1j * k1 * x)
        der = 1j * k1 * (a * cmath.exp(1j * k1 * x) - b * cmath.exp(-1j * k1 * x))
        a = 0.5 * (val + der / (1j * k0)) * cmath.exp(-1j * k0 * x)
        b = 0.5 * (val - der / (1j * k0)) * cmath.exp(1j * k0 * x)
    return a, b, ks


def oracle_s(levels, edges, energy):
    """(s_rl, s_ll, s_rr) by plane-wave matching."""
    a, b, ks = _right_incoming_coeffs(levels, edges, energy)
    s_rl = cmath.sqrt(ks[-1] / ks[0]) / a
    s_ll = b / a
    mir_a, mir_b, _ = _right_incoming_coeffs(levels[::-1], [-e for e in edges[::-1]], energy)
    return s_rl, s_ll, mir_b / mir_a


def oracle_matrix(levels, edges, energy):
    s_rl, s_ll, s_rr = oracle_s(levels, edges, energy)
    return np.array([[s_rl, s_rr], [s_ll, s_rl]])


def barrier_potential(v_left, v_right, steps):
    """Custom potential with constant pieces ``steps = [(x0, x1, level), ...]``."""
    pieces = [(a, b, (lvl,)) for a, b, lvl in steps]
    return make_custom(v_left, v_right, pieces, 8.0, 1e9)


# -- Jost solutions -----------------------------------------------------------

def test_right_jost_of_pure_step_matches_plane_waves():
    pot = make_pure_step(0.0, 1.0)
    e = 2.0
    k, q = math.sqrt(e), math.sqrt(e - 1.0)
    f = jost_right(pot, e)
    left = f.x < -0.5
    x = f.x[left]
    amp_in, amp_out = 0.5 * (1 + q / k), 0.5 * (1 - q / k)
    exact = amp_in * np.exp(1j * k * x) + amp_out * np.exp(-1j * k * x)
    np.testing.assert_allclose(f.values[left], exact, atol=1e-10)
    right = f.x > 0.5
    np.testing.assert_allclose(f.values[right], np.exp(1j * q * f.x[right]), atol=1e-10)


def test_jost_solves_the_equation_and_wronskian_is_constant():
    pot = make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0)
    fl, fr = jost_left(pot, 1.7), jost_right(pot, 1.7)
    # the residual uses a second-order difference on the node spacing
    assert fl.residual(pot) < 5e-3
    assert fr.residual(pot) < 5e-3
    w, dev = wronskian(fl, fr, audit=True)
    assert dev < 1e-9 * abs(w)


def test_evanescent_right_jost_decays():
    pot = make_smooth_step(0.0, 1.0, 1.0)
    f = jost_right(pot, 0.5)
    assert f.k.imag > 0 and f.k.real == 0
    tail = f.x > 10
    np.testing.assert_allclose(np.abs(f.values[tail]), np.exp(-math.sqrt(0.5) * f.x[tail]),
                               rtol=1e-6)


def test_short_grid_rejected():
    pot = make_smooth_step(0.0, 1.0, 1.0)
    with pytest.raises(GridError):
        jost_right(pot, 2.0, grid=SpatialGrid(-2.0, 2.0))


# -- S-matrix -----------------------------------------------------------------

@pytest.mark.parametrize("energy", [1.2, 2.0, 3.0])
def test_pure_step_plane_wave_formulas(energy):
    sp = s_matrix_at(make_pure_step(0.0, 1.0), energy)
    k, q = math.sqrt(energy), math.sqrt(energy - 1.0)
    assert abs(sp.s_rl - 2 * math.sqrt(k * q) / (k + q)) < 1e-8
    assert abs(sp.s_ll - (k - q) / (k + q)) < 1e-8
    assert abs(sp.s_rr + (k - q) / (k + q)) < 1e-8


@pytest.mark.parametrize("energy", [0.25, 0.5, 0.75])
def test_pure_step_total_reflection_phase(energy):
    sp = s_matrix_at(make_pure_step(0.0, 1.0), energy)
    k, kappa = math.sqrt(energy), math.sqrt(1.0 - energy)
    assert abs(sp.s_ll - (k - 1j * kappa) / (k + 1j * kappa)) < 1e-8
    assert abs(abs(sp.s_ll) - 1.0) < 1e-10
    assert sp.regime == "one-channel"
    assert not sp.has("rl")
    with pytest.raises(AbsentEntryError):
        sp.s_rl


def test_half_step_value():
    sp = s_matrix_at(make_pure_step(0.0, 1.0), 0.5)
    assert abs(sp.s_ll + 1j) < 1e-10


def test_free_potential_is_transparent():
    sp = s_matrix_at(make_pure_step(0.3, 0.3), 1.0)
    assert abs(sp.s_rl - 1.0) < 1e-10
    assert abs(sp.s_ll) < 1e-10 and abs(sp.s_rr) < 1e-10


@pytest.mark.parametrize("energy", [0.6, 1.5, 2.5])
def test_square_barrier_against_transfer_matrix(energy):
    # classic barrier of height 1 on [0, 1.5]; tunnelling at 0.6
    pot = barrier_potential(0.0, 0.0, [(0.0, 1.5, 1.0)])
    sp = s_matrix_at(pot, energy)
    s_rl, s_ll, s_rr = oracle_s([0.0, 1.0, 0.0], [0.0, 1.5], energy)
    assert abs(sp.s_rl - s_rl) < 1e-8
    assert abs(sp.s_ll - s_ll) < 1e-8
    assert abs(sp.s_rr - s_rr) < 1e-8


def test_square_barrier_textbook_transmission():
    # |t|^2 = 1 / (1 + V0^2 sin^2(q a) / (4 E (E - V0)))
    v0, a, e = 1.0, 1.5, 2.5
    pot = barrier_potential(0.0, 0.0, [(0.0, a, v0)])
    q = math.sqrt(e - v0)
    expected = 1.0 / (1.0 + v0 ** 2 * math.sin(q * a) ** 2 / (4 * e * (e - v0)))
    assert abs(s_matrix_at(pot, e).s_rl) ** 2 == pytest.approx(expected, rel=1e-9)


def test_stepped_well_between_different_asymptotes():
    levels = [0.0, -0.5, 0.8, 1.0]
    edges = [-1.0, 0.5, 2.0]
    pot = barrier_potential(0.0, 1.0, [(-1.0, 0.5, -0.5), (0.5, 2.0, 0.8)])
    for e in (0.4, 1.6, 3.0):
        sp = s_matrix_at(pot, e)
        s_rl, s_ll, s_rr = oracle_s(levels, edges, e)
        assert abs(sp.s_ll - s_ll) < 1e-8
        if e > 1.0:
            assert abs(sp.s_rl - s_rl) < 1e-8
            assert abs(sp.s_rr - s_rr) < 1e-8


@pytest.mark.parametrize("energy", [0.0, -1.0, 1.0, 1.01, 0.98, float("nan")])
def test_threshold_energies_rejected(energy):
    with pytest.raises(ThresholdError):
        s_matrix_at(make_smooth_step(0.0, 1.0, 1.0), energy)


@settings(max_examples=20, deadline=None)
@given(jump=st.floats(0.2, 3.0), width=st.floats(0.3, 3.0), frac=st.floats(0.1, 0.9),
       above=st.floats(0.1, 3.0), height=st.floats(-0.5, 1.0))
def test_structure_properties(jump, width, frac, above, height):
    pot = make_step_plus_bump(0.0, jump, height, 0.3, 0.8, width=width)
    below = s_matrix_at(pot, 0.05 * jump + frac * 0.9 * jump)
    assert abs(abs(below.s_ll) - 1.0) < 1e-8
    sp = s_matrix_at(pot, jump * 1.05 + above)
    assert sp.unitarity_defect < 1e-8
    assert abs(abs(sp.s_ll) - abs(sp.s_rr)) < 1e-8
    # the off-diagonal structure implied by unitarity
    assert abs(np.conj(sp.s_rl) * sp.s_rr + np.conj(sp.s_ll) * sp.s_rl) < 1e-8


# -- Eisenbud-Wigner matrix ---------------------------------------------------

@pytest.mark.parametrize("energy", [0.3, 0.5, 0.8])
def test_pure_step_one_channel_delay(energy):
    # s_ll = exp(-2i atan(kappa/k)), so t_ll = 1 / (kappa k)
    tp = ew_matrix_at(make_pure_step(0.0, 1.0), energy)
    k, kappa = math.sqrt(energy), math.sqrt(1.0 - energy)
    assert tp.t_ll == pytest.approx(1.0 / (kappa * k), rel=1e-7)
    assert tp.regime == "one-channel"
    with pytest.raises(AbsentEntryError):
        tp.entry("rr")


@pytest.mark.parametrize("energy", [1.2, 2.0, 3.0])
def test_pure_step_two_channel_delay(energy):
    # S is the rotation by alpha with sin(alpha) = (k - q) / (k + q)
    tp = ew_matrix_at(make_pure_step(0.0, 1.0), energy)
    k, q = math.sqrt(energy), math.sqrt(energy - 1.0)
    refl = (k - q) / (k + q)
    trans = 2 * math.sqrt(k * q) / (k + q)
    d_refl = -1.0 / (k * q * (k + q) ** 2)
    assert abs(tp.t_ll) < 1e-6 and abs(tp.t_rr) < 1e-6
    assert abs(tp.t_lr - 1j * d_refl / trans) < 1e-7
    assert abs(tp.t_rl + 1j * d_refl / trans) < 1e-7


def test_pure_step_t_lr_reference_value():
    tp = ew_matrix_at(make_pure_step(0.0, 1.0), 2.0)
    np.testing.assert_allclose(tp.t_lr, -0.123146j, atol=1e-6)


@pytest.mark.parametrize("energy", [0.5, 1.6, 3.0])
def test_stepped_well_delay_against_oracle(energy):
    levels, edges = [0.0, -0.5, 0.8, 1.0], [-1.0, 0.5, 2.0]
    pot = barrier_potential(0.0, 1.0, [(-1.0, 0.5, -0.5), (0.5, 2.0, 0.8)])
    tp = ew_matrix_at(pot, energy)
    h = 1e-5
    if energy < 1.0:
        s = oracle_s(levels, edges, energy)[1]
        ds = (oracle_s(levels, edges, energy + h)[1] - oracle_s(levels, edges, energy - h)[1]) / (2 * h)
        assert tp.t_ll == pytest.approx(complex(-1j * np.conj(s) * ds), abs=1e-6)
        return
    m = oracle_matrix(levels, edges, energy)
    dm = (oracle_matrix(levels, edges, energy + h) - oracle_matrix(levels, edges, energy - h)) / (2 * h)
    np.testing.assert_allclose(tp.matrix, -1j * m.conj().T @ dm, atol=1e-6)


def test_ew_matrix_on_analytic_rotation():
    def s_of_e(e):
        a = e ** 2
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    tp = ew_matrix(s_of_e, 1.3, step=1e-3)
    np.testing.assert_allclose(tp.matrix, [[0, 2.6j], [-2.6j, 0]], atol=1e-9)
    assert tp.hermiticity_defect < 1e-9


def test_central_and_richardson_schemes_agree():
    pot = make_smooth_step(0.0, 1.0, 1.0)
    a = ew_matrix_at(pot, 2.0, scheme="central")
    b = ew_matrix_at(pot, 2.0, scheme="richardson")
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-6)


def test_rough_derivative_certificate():
    def s_of_e(e):
        return np.array([[np.exp(1j * abs(e - 1.0) ** 0.5)]])
    with pytest.raises(CertificateError) as info:
        ew_matrix(s_of_e, 1.0001, step=1e-3)
    assert info.value.certificate == "derivative-convergence"


def test_stencil_may_not_cross_threshold():
    with pytest.raises(ThresholdError):
        ew_matrix(lambda e: np.eye(1), 1.001, step=1e-3, thresholds=(1.0,))


# -- sweeps -------------------------------------------------------------------

def test_sweep_structure_and_interpolation():
    pot = make_smooth_step(0.0, 1.0, 1.0)
    energies = np.linspace(1.1, 3.0, 40)
    data = scattering_sweep(pot, energies)
    assert data.unitarity_defects.max() < 1e-9
    assert np.all(data.wronskian_deviations < 1e-8)
    herm = [tp.hermiticity_defect for tp in data.t]
    assert max(herm) < 1e-6
    spline = data.interpolator("rl")
    mid = 0.5 * (energies[10] + energies[11])
    assert abs(spline(np.array([mid]))[0] - s_matrix_at(pot, mid).s_rl) < 1e-6
    with pytest.raises(ThresholdError):
        spline(np.array([3.5]))


def test_sweep_reports_energy_index():
    with pytest.raises(ThresholdError, match="energy index 2"):
        scattering_sweep(make_pure_step(0.0, 1.0), [1.5, 2.0, 1.0])


def test_threaded_sweep_matches_serial():
    pot = make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0)
    energies = np.linspace(0.2, 2.5, 12)
    energies = energies[np.abs(energies - 1.0) > 0.06]
    a = scattering_sweep(pot, energies)
    b = scattering_sweep(pot, energies, workers=4)
    np.testing.assert_array_equal(a.entry_array("ll"), b.entry_array("ll"))
    np.testing.assert_array_equal(a.t_array("ll"), b.t_array("ll"))
