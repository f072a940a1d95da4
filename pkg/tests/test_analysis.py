import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermophoresis import analysis as an
from thermophoresis.errors import AnalysisError, ParameterError
from thermophoresis.fokker_planck import DensityProfile
from thermophoresis.langevin import TrajectoryEnsemble
from thermophoresis.temperature import TemperatureField


def exp_profile(slope, n=64, lo=-5.0, hi=5.0):
    return DensityProfile.from_function(lambda x: np.exp(slope * x), lo, hi, n)


def test_noiseless_log_slope():
    fit = an.fit_log_slope(exp_profile(-0.1))
    assert abs(fit.estimate + 0.1) <= 1e-12
    assert fit.residual_norm <= 1e-12


def test_fit_excludes_wall_bins_and_honours_window():
    fit = an.fit_log_slope(exp_profile(0.3, n=20))
    assert fit.window == pytest.approx((-3.75, 3.75))
    fit = an.fit_log_slope(exp_profile(0.3, n=20), window=(-1, 1))
    assert fit.window == pytest.approx((-0.75, 0.75))


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(1e-3, 1e3))
def test_slope_invariant_under_rescaling(slope, scale):
    p = exp_profile(slope, n=32)
    q = DensityProfile(p.lo, p.hi, scale * p.values)
    assert an.fit_log_slope(q).estimate == pytest.approx(an.fit_log_slope(p).estimate, abs=1e-10)


def test_fit_rejects_empty_bins():
    with pytest.raises(AnalysisError):
        an.fit_log_slope(DensityProfile(0, 1, np.r_[np.ones(10), 0.0, np.ones(10)]))


def test_histogram_of_uniform_samples():
    rng = np.random.default_rng(3)
    n, bins = 200_000, 32
    h = an.histogram_samples(rng.uniform(-5, 5, n), -5, 5, bins)
    expected = n / bins
    counts = h.values * h.dx * n
    assert np.all(np.abs(counts - expected) <= 4 * math.sqrt(expected))


def test_histogram_of_ensemble_selects_record():
    times = np.array([0.0, 1.0, 2.0])
    x = np.tile([0.5, -4.9, 4.9], (100, 1))
    ens = TrajectoryEnsemble("overdamped1", times, x, None, 0, (-5.0, 5.0))
    h = an.histogram(ens, t_select=0.0, n_bins=10)
    assert h.values[5] == pytest.approx(1.0)
    with pytest.raises(AnalysisError):
        an.histogram(ens, t_select=3.0)


def test_pooling_uses_trailing_fifth_with_stride():
    times = np.linspace(0, 100, 101)
    assert list(an.pooling_indices(times)) == list(range(80, 101))
    assert list(an.pooling_indices(times, relaxation_time=1.0)) == [80, 85, 90, 95, 100]


def test_rebin():
    p = DensityProfile(0, 4, [1.0, 3.0, 2.0, 2.0])
    np.testing.assert_allclose(an.rebin(p, 2).values, [0.25, 0.25])
    with pytest.raises(AnalysisError):
        an.rebin(p, 3)


def test_soret_estimate_exact_for_boltzmann_like_profile():
    # P proportional to 1/T has -(ln P)' = T'/T, so S_hat T = 1 up to the centred-difference error
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    p = DensityProfile.from_function(lambda x: 1.0 / fld.eval(x), -5, 5, 256)
    est = an.estimate_soret(p, fld)
    assert np.max(np.abs(est.ratio - 1)) <= 1e-6


def test_soret_needs_a_gradient():
    fld = TemperatureField.constant(1.0, (-5, 5))
    with pytest.raises(AnalysisError):
        an.estimate_soret(DensityProfile.uniform(-5, 5, 16), fld)


def test_white_noise_autocovariance():
    rng = np.random.default_rng(1)
    c = an.autocovariance(rng.standard_normal((50, 4000)), 10, mean=0.0)
    assert c[0] == pytest.approx(1.0, abs=0.02)
    assert np.all(np.abs(c[1:]) <= 0.02)
    assert an.noise_strength(c, 0.1) == pytest.approx(0.1, abs=0.02)


def test_autocovariance_of_cosine():
    n = 100_000
    t = np.arange(n) * 0.1
    c = an.autocovariance(np.cos(t), 50, mean=0.0)
    lags = np.arange(51)
    # biased estimator carries the (n - l)/n factor
    np.testing.assert_allclose(c, 0.5 * np.cos(0.1 * lags) * (n - lags) / n, atol=1e-4)


def test_autocovariance_length_guard():
    with pytest.raises(ParameterError):
        an.autocovariance(np.zeros(99), 10)


def test_density_distance_values():
    u = DensityProfile.uniform(-5, 5, 4096)
    assert an.density_distance(u, u) == 0.0
    left = DensityProfile(-5, 5, np.r_[np.ones(2048), np.zeros(2048)])
    right = DensityProfile(-5, 5, np.r_[np.zeros(2048), np.ones(2048)])
    assert an.density_distance(left, right) == pytest.approx(2.0)
    assert an.density_distance(u, exp_profile(-0.1, n=4096)) == pytest.approx(0.24660, abs=1e-5)


def test_density_distance_grid_mismatch():
    with pytest.raises(AnalysisError):
        an.density_distance(DensityProfile.uniform(0, 1, 8), DensityProfile.uniform(0, 1, 16))


def test_exponential_relaxation_fit():
    t = np.linspace(0, 5, 400)
    v = 0.2 + 1.5 * np.exp(-1.3 * t)
    fit = an.fit_exponential_relaxation(t, v, t_min=0.5)
    assert fit.estimate == pytest.approx(1.3, rel=1e-8)
    with pytest.raises(AnalysisError):
        an.fit_exponential_relaxation(t[:3], v[:3])
