import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnlab.errors import ChargeImbalanceError, ConvergenceError
from qnlab.fields import (
    PlasmaParameters,
    debye_length,
    fit_decay_rate,
    poisson_boltzmann_residual,
    screening_profile,
    solve_limit_potential,
    solve_poisson_boltzmann,
    solve_scaled_poisson,
    spectral_derivative,
)
from qnlab.phase_space import PhaseGrid, moments, monokinetic


def grid_x(n):
    return (np.arange(n) + 0.5) / n


def band_limited(rng, n, modes=6, scale=0.2):
    x = grid_x(n)
    out = np.zeros(n)
    for k in range(1, modes + 1):
        out += scale / k * (rng.standard_normal() * np.cos(2 * np.pi * k * x) + rng.standard_normal() * np.sin(2 * np.pi * k * x))
    return out


# --- scaled Poisson -----------------------------------------------------------


def test_scaled_poisson_neutral_density():
    fs = solve_scaled_poisson(np.ones(32), 0.1)
    assert np.all(fs.u == 0) and np.all(fs.e == 0)


@pytest.mark.parametrize("eps", [1.0, 0.3, 0.05])
def test_scaled_poisson_single_mode(eps):
    x, a = grid_x(64), 0.3
    fs = solve_scaled_poisson(1 + a * np.cos(2 * np.pi * x), eps)
    exact_u = a * np.cos(2 * np.pi * x) / (eps**2 * (2 * np.pi) ** 2)
    exact_e = a * np.sin(2 * np.pi * x) / (eps**2 * 2 * np.pi)
    scale = np.max(np.abs(exact_u))
    assert np.max(np.abs(fs.u - exact_u)) <= 1e-12 * scale
    assert np.max(np.abs(fs.e - exact_e)) <= 1e-12 * np.max(np.abs(exact_e))


def test_scaled_poisson_halving_epsilon_quadruples(rng):
    rho = 1 + band_limited(rng, 64)
    rho /= rho.mean()
    u1 = solve_scaled_poisson(rho, 0.2).u
    u2 = solve_scaled_poisson(rho, 0.1).u
    np.testing.assert_allclose(u2, 4 * u1, rtol=1e-12, atol=1e-12 * np.max(np.abs(u2)))


def test_scaled_poisson_rejects_charge_imbalance():
    with pytest.raises(ChargeImbalanceError) as info:
        solve_scaled_poisson(np.full(16, 1.01), 0.1)
    assert info.value.defect == pytest.approx(0.01)


def test_scaled_poisson_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        solve_scaled_poisson(np.ones(16), 0.0)


@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.02, 2.0), c=st.floats(-3, 3))
def test_scaled_poisson_linearity_and_homogeneity(seed, eps, c):
    r = np.random.default_rng(seed)
    s1, s2 = band_limited(r, 32), band_limited(r, 32)
    s1 -= s1.mean()
    s2 -= s2.mean()
    u1 = solve_scaled_poisson(1 + s1, eps).u
    u2 = solve_scaled_poisson(1 + s2, eps).u
    u12 = solve_scaled_poisson(1 + s1 + c * s2, eps).u
    scale = np.max(np.abs(u1)) + abs(c) * np.max(np.abs(u2)) + 1e-300
    assert np.max(np.abs(u12 - (u1 + c * u2))) <= 1e-12 * scale
    unit = solve_scaled_poisson(1 + s1, 1.0).u
    assert np.max(np.abs(u1 - unit / eps**2)) <= 1e-12 * np.max(np.abs(u1))


@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(0.05, 1.0))
def test_scaled_poisson_field_state_invariants(seed, eps):
    r = np.random.default_rng(seed)
    s = band_limited(r, 64)
    fs = solve_scaled_poisson(1 + s - s.mean(), eps)
    assert abs(fs.u.mean()) <= 1e-12 * max(1.0, np.max(np.abs(fs.u)))
    assert abs(fs.e.mean()) <= 1e-12 * max(1.0, np.max(np.abs(fs.e)))
    np.testing.assert_allclose(fs.e, -spectral_derivative(fs.u), atol=1e-10 * max(1.0, np.max(np.abs(fs.e))))
    residual = -eps**2 * spectral_derivative(fs.u, 2) - s + s.mean()
    assert np.max(np.abs(residual)) <= 1e-10


# --- Poisson-Boltzmann --------------------------------------------------------


def test_pb_neutral_density():
    fs = solve_poisson_boltzmann(np.ones(32), 0.1)
    assert np.max(np.abs(fs.u)) == 0.0


@pytest.mark.parametrize("c", [-1.5, 0.3, 2.0])
def test_pb_constant_density(c):
    fs = solve_poisson_boltzmann(np.full(32, math.exp(c)), 0.2)
    np.testing.assert_allclose(fs.u, c, atol=1e-12)


@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_pb_matches_linearisation(eps):
    x, a = grid_x(64), 1e-3
    fs = solve_poisson_boltzmann(1 + a * np.cos(2 * np.pi * x), eps)
    lin = a * np.cos(2 * np.pi * x) / (1 + eps**2 * (2 * np.pi) ** 2)
    assert np.max(np.abs(fs.u - lin)) <= 5 * a**2


@pytest.mark.parametrize("eps", [1.0, 0.1])
@pytest.mark.parametrize("a", [0.01, 0.1, 0.3, 0.5])
def test_pb_newton_iterations_and_residual(eps, a):
    x = grid_x(128)
    rho = 1 + a * np.cos(2 * np.pi * x)
    fs = solve_poisson_boltzmann(rho, eps)
    assert fs.iterations <= 12
    assert fs.residual <= 1e-10
    assert np.max(np.abs(poisson_boltzmann_residual(fs.u, rho, eps))) <= 1e-10


def test_pb_rejects_negative_density():
    rho = np.ones(16)
    rho[3] = -0.1
    with pytest.raises(ValueError):
        solve_poisson_boltzmann(rho, 0.1)


def test_pb_reports_residual_history():
    rho = 1 + 0.5 * np.cos(2 * np.pi * grid_x(64))
    with pytest.raises(ConvergenceError) as info:
        solve_poisson_boltzmann(rho, 0.1, max_iter=1)
    assert len(info.value.residual_history) >= 2


@given(seed=st.integers(0, 2**32 - 1), eps=st.sampled_from([1.0, 0.3, 0.1]))
def test_pb_comparison_principle(seed, eps):
    r = np.random.default_rng(seed)
    base = 1 + band_limited(r, 32, modes=3, scale=0.1)
    bump = 0.2 + band_limited(r, 32, modes=3, scale=0.05)
    bump = np.maximum(bump, 0.0)
    low = solve_poisson_boltzmann(base, eps).u
    high = solve_poisson_boltzmann(base + bump, eps).u
    assert np.all(high >= low - 1e-9)


@pytest.mark.parametrize("eps", [1.0, 0.3, 0.1])
@pytest.mark.parametrize("k", [1, 3])
def test_pb_minus_poisson_matches_mode_factor(eps, k):
    # relative to the Poisson potential, the PB potential is damped mode-wise by
    # eps^2 k^2 / (1 + eps^2 k^2)
    x, a = grid_x(64), 1e-4
    rho = 1 + a * np.cos(2 * np.pi * k * x)
    pb = solve_poisson_boltzmann(rho, eps).u
    ps = solve_scaled_poisson(rho, eps).u
    kk = (2 * np.pi * k) ** 2
    mode = np.cos(2 * np.pi * k * x)
    diff = 2 * np.mean((pb - ps) * mode)
    predicted = -a / (eps**2 * kk) / (1 + eps**2 * kk)
    assert np.sign(diff) == np.sign(predicted)
    assert diff == pytest.approx(predicted, rel=1e-3)
    ratio = (2 * np.mean(pb * mode)) / (2 * np.mean(ps * mode))
    assert ratio == pytest.approx(eps**2 * kk / (1 + eps**2 * kk), rel=1e-3)


# --- limit potential --------------------------------------------------------


def test_limit_potential_constant_pi():
    fs = solve_limit_potential(np.full(16, 0.7))
    assert np.all(fs.u == 0) and fs.epsilon == 0.0


def test_limit_potential_cosine():
    x = grid_x(64)
    fs = solve_limit_potential(np.cos(2 * np.pi * x))
    np.testing.assert_allclose(fs.u, -np.cos(2 * np.pi * x), atol=1e-15)
    np.testing.assert_allclose(fs.e, -2 * np.pi * np.sin(2 * np.pi * x), atol=1e-12)


def test_limit_potential_of_uniform_monokinetic_flow():
    g = PhaseGrid(32, 64, 1.0)
    pi = moments(monokinetic(np.ones(32), np.full(32, 0.3), g)).pi
    fs = solve_limit_potential(pi)
    assert np.max(np.abs(fs.e)) <= 1e-13


# --- Debye length and screening ------------------------------------------------


def test_debye_length_scalings():
    assert debye_length(PlasmaParameters(1, 1, 1, 1, 1)) == 1.0
    assert debye_length(PlasmaParameters(4, 1, 1, 1, 1)) == pytest.approx(2.0)
    assert debye_length(PlasmaParameters(1, 4, 1, 1, 1)) == pytest.approx(0.5)


def test_debye_length_physical_values():
    # electron plasma at 1 eV and 1e18 m^-3 has a Debye length of about 7.4 micrometres
    p = PlasmaParameters(11604.5, 1e18, 8.8541878128e-12, 1.380649e-23, 1.602176634e-19)
    assert debye_length(p) == pytest.approx(7.434e-6, rel=1e-3)


def test_plasma_parameters_positive():
    with pytest.raises(ValueError):
        PlasmaParameters(1, 0, 1, 1, 1)


@pytest.mark.parametrize("eps", [0.05, 0.02])
def test_screening_decay_rate(eps):
    u = screening_profile(1.0, 3 / 1024, eps, nx=1024)
    assert fit_decay_rate(u, eps) * eps == pytest.approx(1.0, rel=0.1)


def test_screening_decay_matches_green_function():
    # independent oracle: the periodic Green function of 1 - eps^2 d^2/dx^2
    eps, nx = 0.05, 1024
    x = (np.arange(nx) + 0.5) / nx
    d = np.abs(x - 0.5)
    green = np.cosh((0.5 - d) / eps) / (2 * eps * np.sinh(0.5 / eps))
    sel = (d >= 3 * eps) & (d <= 8 * eps)
    oracle = -np.polyfit(d[sel], np.log(green[sel]), 1)[0]
    u = screening_profile(1.0, 3 / nx, eps, nx=nx)
    assert fit_decay_rate(u, eps) == pytest.approx(oracle, rel=0.02)


def test_screening_zero_amplitude_and_linearity():
    assert np.all(screening_profile(0.0, 0.01, 0.05) == 0)
    u1 = screening_profile(0.7, 0.01, 0.05)
    u2 = screening_profile(1.4, 0.01, 0.05)
    np.testing.assert_allclose(u2, 2 * u1, rtol=1e-14, atol=1e-300)


@pytest.mark.parametrize("width,eps", [(1e-3, 0.05), (0.01, 1e-3), (0.01, 0.6)])
def test_screening_rejects_unresolved(width, eps):
    with pytest.raises(ValueError):
        screening_profile(1.0, width, eps, nx=1024)
