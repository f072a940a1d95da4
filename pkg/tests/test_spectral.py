import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from thermophoresis.errors import ParameterError
from thermophoresis.spectral import (
    SpectralModel, alpha_tilde_for_kappa, discretize, kappa_from_bath, kernel,
    kernel_integral, kernel_quad,
)

OHMIC = SpectralModel(eta=1.0, cutoff=10.0)


def power_law_kernel(eta, s, wc, tau):
    """Independent closed form (2 eta/pi) Gamma(s) Re[(1/wc - i tau)^-s]."""
    return 2 * eta / math.pi * gamma(s) * ((1.0 / wc - 1j * tau) ** (-s)).real


def test_kernel_values():
    assert kernel(OHMIC, 0.0) == pytest.approx(6.3662, rel=1e-4)
    assert kernel(OHMIC, 1.0) == pytest.approx(0.063031, rel=1e-4)


def test_kernel_closed_form_matches_quadrature():
    for tau in np.linspace(0, 2, 20):
        assert abs(kernel(OHMIC, tau) - kernel_quad(OHMIC, tau)) <= 1e-8


@pytest.mark.parametrize("s", [0.5, 2.0, 3.0])
def test_power_law_quadrature_against_gamma_form(s):
    model = SpectralModel("power-law", eta=0.7, exponent=s, cutoff=4.0)
    for tau in (0.0, 0.05, 0.3, 1.0, 4.0):
        assert kernel_quad(model, tau) == pytest.approx(power_law_kernel(0.7, s, 4.0, tau),
                                                        rel=1e-7, abs=1e-10)


def test_kernel_integral_is_eta():
    assert kernel_integral(SpectralModel(eta=2.5, cutoff=3.0)) == pytest.approx(2.5, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.5, 100.0), st.floats(0.0, 10.0))
def test_kernel_even_and_bounded(eta, wc, tau):
    m = SpectralModel(eta=eta, cutoff=wc)
    k = kernel(m, tau)
    assert k == kernel(m, -tau)
    assert 0 < k <= kernel(m, 0.0)


def test_delta_limit():
    # as the cutoff grows the area of K within |tau| < eps approaches eta
    eps = 0.05
    areas = [quad(lambda t: kernel(SpectralModel(eta=1.0, cutoff=wc), t), 0, eps, limit=200)[0]
             for wc in (10.0, 100.0, 1000.0)]
    assert areas[0] < areas[1] < areas[2]
    assert areas[2] == pytest.approx(1.0, abs=0.02)


def test_infinite_cutoff_rejected_for_kernel():
    with pytest.raises(ParameterError):
        kernel(SpectralModel(eta=1.0), 0.1)


def test_single_mode_coupling():
    spec = discretize(SpectralModel(eta=1.0), 1, omega_max=1.0)
    assert spec.c[0] == pytest.approx(0.39894, rel=1e-4)


def test_coupling_sum_matches_kernel_at_zero():
    spec = discretize(OHMIC, 4000)
    assert spec.coupling_sum == pytest.approx(kernel(OHMIC, 0.0), rel=0.01)


def test_reconstructed_spectral_density():
    spec = discretize(OHMIC, 1000)
    np.testing.assert_allclose(spec.reconstructed_J(), OHMIC.J(spec.omega), rtol=1e-12)


def test_reconstruction_within_two_percent():
    spec = discretize(OHMIC, 4000)
    taus = np.linspace(0, 5 / OHMIC.cutoff, 101)
    assert np.max(np.abs(spec.correlation(taus) / kernel(OHMIC, taus) - 1)) <= 0.02


def test_reconstruction_improves_with_n():
    taus = np.linspace(0, 5 / OHMIC.cutoff, 51)
    errs = [np.max(np.abs(discretize(OHMIC, n).correlation(taus) - kernel(OHMIC, taus)))
            for n in (500, 1000, 2000, 4000)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_recurrence_time():
    spec = discretize(OHMIC, 4000, omega_max=100.0)
    assert spec.recurrence_time == pytest.approx(2 * math.pi * 40.0)


def test_kappa_alpha_round_trip():
    spec = discretize(SpectralModel(eta=1.0, cutoff=50.0), 4000, omega_max=500.0)
    alpha = alpha_tilde_for_kappa(spec, 0.5)
    assert kappa_from_bath(spec, alpha) == pytest.approx(0.5, rel=1e-14)
    # coupling sum approaches 2 eta w_c/pi, so alpha_tilde -> kappa pi/(2 eta w_c)
    assert alpha == pytest.approx(0.5 * math.pi / 100.0, rel=0.01)


def test_invalid_models():
    with pytest.raises(ParameterError):
        SpectralModel("ohmic", exponent=2.0)
    with pytest.raises(ParameterError):
        SpectralModel("lorentz")
    with pytest.raises(ParameterError):
        SpectralModel(eta=-1.0)
    with pytest.raises(ParameterError):
        discretize(OHMIC, 0)


def test_correlation_time_mapping_gives_two_over_pi_squared():
    from thermophoresis.temperature import alpha_tilde_from_correlation_time
    model = SpectralModel(eta=1.0, cutoff=50.0)
    spec = discretize(model, 4000, omega_max=500.0)
    alpha = alpha_tilde_from_correlation_time(0.5, model.tau_R, model.eta)
    assert kappa_from_bath(spec, alpha) == pytest.approx(0.5 * 2 / math.pi**2, rel=0.01)
