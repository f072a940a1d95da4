"""End-to-end acceptance checks at full scale (several minutes on one core)."""

import math

import numpy as np
import pytest
import yaml

from thermophoresis import analysis as an
from thermophoresis import cli
from thermophoresis import fokker_planck as fp
from thermophoresis import langevin as lg
from thermophoresis import micro_one as m1
from thermophoresis import micro_two as m2
from thermophoresis import spectral
from thermophoresis.micro_two import WeightFunction
from thermophoresis.potentials import Potential
from thermophoresis.temperature import TemperatureField

pytestmark = pytest.mark.acceptance

N_TRAJ = 100_000


def rel(value, target):
    return abs(value - target) / abs(target)


# -- 1. driven bath: exponential stationary profile ----------------------------------

def test_model_one_stationary_exponential(report):
    fld = TemperatureField.linear(1.0, 0.2, (-5, 5))
    p = lg.EffectiveParamsI(fld, kappa=0.5)
    ens = lg.run_ensemble("overdamped1", p, N_TRAJ, 0.02, 100.0, 101)
    slope = an.fit_log_slope(an.histogram(ens, pool=True, n_bins=32)).estimate

    a, D = lg.fpe_coefficients(p)
    P = fp.evolve(a, D, fp.DensityProfile.uniform(-5, 5, 512), fp.stable_dt(a, D, -5, 5, 512), 100.0)
    linf = float(np.max(np.abs(P.values - fp.steady_state_I(p, n=512).values)))

    ok = rel(slope, -0.1) <= 0.05 and linf <= 1e-3
    report(1, ok, f"ensemble log-slope {slope:.5f} (target -0.1 +-5%), "
                  f"FPE vs closed form Linf {linf:.2e} (<= 1e-3)")
    assert ok


# -- 2 and 3. site baths: exponential profile and Soret relation --------------------

@pytest.fixture(scope="module")
def site_bath_setup():
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    w = WeightFunction(sigma=0.1, box_length=10.0)
    # eta chosen so that eta_eff(0) = 1
    p = lg.EffectiveParamsII(w, fld, eta=1.0 / (math.sqrt(math.pi) * 0.01), approximation="local_flat")
    ens = lg.run_ensemble("overdamped2", p, N_TRAJ, 0.02, 100.0, 202)
    return fld, p, an.histogram(ens, pool=True, n_bins=32)


def test_model_two_stationary_exponential(site_bath_setup, report):
    fld, p, hist = site_bath_setup
    slope_ens = an.fit_log_slope(hist).estimate
    a, D = lg.fpe_coefficients(p)
    P = fp.evolve(a, D, fp.DensityProfile.uniform(-5, 5, 512), fp.stable_dt(a, D, -5, 5, 512), 150.0)
    slope_fpe = an.fit_log_slope(P).estimate
    ok = rel(slope_ens, 0.1) <= 0.05 and rel(slope_fpe, 0.1) <= 0.05
    report(2, ok, f"log-slope ensemble {slope_ens:.5f}, FPE {slope_fpe:.5f} (target +0.1 +-5%)")
    assert ok


def test_soret_relation(site_bath_setup, report):
    fld, _, hist = site_bath_setup
    ratio = an.estimate_soret(hist, fld).mean_ratio((-2.5, 2.5))
    ok = rel(ratio, 1.0) <= 0.10
    report(3, ok, f"S_T(x) T(x) averaged over the central half-box {ratio:.4f} (target 1 +-10%)")
    assert ok


# -- 4. driven bath: coefficients from the explicit oscillator model ----------------

def test_microscopic_one_coefficients(report):
    model = spectral.SpectralModel(eta=1.0, cutoff=50.0)
    spec = spectral.discretize(model, 4000, omega_max=500.0)
    fld = TemperatureField.linear(1.0, 0.1, (-9.5, 9.5))
    kappa = 0.5
    alpha = spectral.alpha_tilde_for_kappa(spec, kappa)
    cfg = m1.MeasurementConfig(n_realizations=1000, n_mean_realizations=50000)
    res = m1.measure_effective_coefficients(spec, fld, alpha, cfg, seed=404)
    force_target = -kappa * 0.1
    noise_target = 2.0 * model.eta * 1.0
    ok_f = rel(res.mean_force, force_target) <= 0.15
    ok_n = rel(res.noise_strength, noise_target) <= 0.10
    ok_e = rel(res.eta_hat.estimate, model.eta) <= 0.10
    ok = ok_f and ok_n and ok_e
    report(4, ok, f"mean force {res.mean_force:.5f} +- {res.mean_force_stderr:.5f} "
                  f"(target {force_target} +-15%), noise integral {res.noise_strength:.4f} "
                  f"(target {noise_target} +-10%), kick friction {res.eta_hat.estimate:.4f} "
                  f"(target {model.eta} +-10%)")
    assert ok


# -- 5. site baths: coefficients from the explicit oscillator model -----------------

def test_microscopic_two_coefficients(report):
    spec = spectral.discretize(spectral.SpectralModel(eta=1.0, cutoff=50.0), 1000, omega_max=500.0)
    w = WeightFunction(sigma=0.1, box_length=10.0)
    fld = TemperatureField.linear(1.0, 0.1, (-5, 5))
    stats = m2.measure_clamped_noise(spec, w, fld, 128, 0.0, 1000, 505)
    noise_target = 2.0 * m2.d_eff_two(w, fld, 0.0)

    const = TemperatureField.constant(1.0, (-5, 5))
    eta_target = math.sqrt(math.pi) * w.sigma / w.box_length
    fit, _, _ = m2.kick_friction(spec, w, const, 128, 0.0, eta_target, 1e-3, 3.0, 0.999 * 0.1 / 500.0)
    ok = rel(stats.noise_strength, noise_target) <= 0.10 and rel(fit.estimate, eta_target) <= 0.10
    report(5, ok, f"noise integral {stats.noise_strength:.5f} (target 2 D_eff(0) = "
                  f"{noise_target:.5f} +-10%), friction {fit.estimate:.5f} "
                  f"(target eta sqrt(pi) sigma/L = {eta_target:.5f} +-10%)")
    assert ok


# -- 6. equilibrium recovery ----------------------------------------------------------

def test_equilibrium_recovery(report):
    T, M, w0 = 1.0, 1.0, 1.0
    fld = TemperatureField.constant(T, (-6, 6))
    p = lg.EffectiveParamsI(fld, mass=M, alpha_tilde=0.0, potential=Potential.harmonic(M, w0))
    ens = lg.run_ensemble("underdamped1", p, N_TRAJ, 0.02, 30.0, 606, x0=0.0, n_records=31)
    var = float(np.var(ens.x[:, -1]))
    target = T / (M * w0**2)

    spec = spectral.discretize(spectral.SpectralModel(eta=1.0, cutoff=50.0), 4000, omega_max=500.0)
    st = m1.sample_initial_bath(spec, 0.0, fld, 0.0, 607, mass=M, momentum=0.5)
    pot = Potential.harmonic(M, w0)
    tr = m1.integrate(st, fld, pot, 0.01 / 500.0, 100_000, 1000, energy=True)
    drift = float(np.max(np.abs(tr.energy - tr.energy[0])) / abs(tr.energy[0]))

    ok = rel(var, target) <= 0.03 and drift < 1e-6
    report(6, ok, f"trap variance {var:.4f} (target {target} +-3%), "
                  f"oscillator-bath energy drift {drift:.2e} over 1e5 steps (< 1e-6)")
    assert ok


# -- 7. kernel mathematics ------------------------------------------------------------

def test_kernel_mathematics(report):
    model = spectral.SpectralModel(eta=1.0, cutoff=10.0)
    taus = np.linspace(0.0, 2.0, 20)
    quad_err = max(abs(spectral.kernel(model, t) - spectral.kernel_quad(model, t)) for t in taus)
    integral = spectral.kernel_integral(model)
    spec = spectral.discretize(model, 4000)
    grid = np.linspace(0.0, 5.0 / model.cutoff, 101)
    recon = float(np.max(np.abs(spec.correlation(grid) / spectral.kernel(model, grid) - 1)))
    ok = quad_err <= 1e-8 and abs(integral - 1.0) <= 1e-6 and recon <= 0.02
    report(7, ok, f"closed form vs quadrature {quad_err:.1e} (<= 1e-8), integral {integral:.9f} "
                  f"(eta +- 1e-6), reconstruction error {recon:.4f} (<= 0.02)")
    assert ok


# -- 8. Langevin ensembles agree with Fokker-Planck evolution -------------------------

def _ensemble_vs_fpe(model, params, dt, t_final, seed, n_bins=64, n_cells=512):
    ens = lg.run_ensemble(model, params, N_TRAJ, dt, t_final, seed, x0=("gaussian", 0.0, 1.0))
    hist = an.histogram(ens, n_bins=n_bins)
    a, D = lg.fpe_coefficients(params)
    lo, hi = params.box
    P0 = fp.DensityProfile.gaussian(lo, hi, n_cells, 0.0, 1.0)
    P = fp.evolve(a, D, P0, 0.9 * fp.stable_dt(a, D, lo, hi, n_cells), t_final)
    return an.density_distance(an.rebin(P, n_bins), hist)


def test_langevin_fokker_planck_consistency(report):
    lin = TemperatureField.linear(1.0, 0.2, (-5, 5))
    under = lg.EffectiveParamsI(lin, mass=0.05, kappa=0.5, potential=Potential("harmonic", stiffness=0.5))
    exp5 = TemperatureField.exponential(1.0, 5.0, (-5, 5))
    # drive strength leaving eta_eff >= eta/2 at the hot wall
    over1 = lg.EffectiveParamsI(exp5, alpha_tilde=0.5 / (math.e / 25.0), kappa=0.5)
    over2 = lg.EffectiveParamsII(WeightFunction(sigma=0.5, box_length=10.0),
                                 TemperatureField.exponential(1.0, 10.0, (-5, 5)),
                                 eta=1.0 / (math.sqrt(math.pi) * 0.05), approximation="full")
    d = {
        "underdamped1": _ensemble_vs_fpe("underdamped1", under, 0.004, 5.0, 801),
        "overdamped1": _ensemble_vs_fpe("overdamped1", over1, 0.002, 5.0, 802),
        "overdamped2": _ensemble_vs_fpe("overdamped2", over2, 2.5e-4, 1.0, 803),
    }
    ok = all(v <= 0.05 for v in d.values())
    report(8, ok, "L1 ensemble vs FPE " + ", ".join(f"{k} {v:.4f}" for k, v in d.items())
           + " (each <= 0.05)")
    assert ok


# -- 9. determinism across thread counts ----------------------------------------------

DETERMINISM_CONFIG = {
    "sim": {"seed": 909},
    "bath": {"n_oscillators": 1000},
    "langevin": {"n_traj": 5000, "dt": 0.01, "t_final": 5.0, "n_records": 11},
    "micro1": {"n_realizations": 8, "t_final": 0.2, "dt": 1e-4, "n_records": 1001},
    "micro2": {"n_realizations": 4, "n_sites": 32, "n_oscillators_per_site": 200,
               "t_final": 0.02, "dt": 1e-4, "n_records": 11},
}


def test_determinism(tmp_path, report):
    runs = [("simulate-langevin", {}), ("simulate-langevin", {"langevin": {"model": "underdamped1"}}),
            ("simulate-micro1", {}), ("simulate-micro1", {"micro1": {"clamped": False}}),
            ("simulate-micro2", {}), ("simulate-micro2", {"micro2": {"clamped": False}})]
    mismatched, compared = [], 0
    for i, (command, override) in enumerate(runs):
        doc = yaml.safe_load(yaml.safe_dump(DETERMINISM_CONFIG))
        for sec, body in override.items():
            doc[sec].update(body)
        cfg = tmp_path / f"run{i}.yaml"
        cfg.write_text(yaml.safe_dump(doc))
        outs = []
        for threads in (1, 4, 1):
            out = tmp_path / f"run{i}_{threads}_{len(outs)}"
            assert cli.main([command, "--config", str(cfg), "--threads", str(threads),
                             "--out", str(out)]) == 0
            outs.append(out)
        for path in sorted(outs[0].glob("*.csv")):
            compared += 1
            if any((o / path.name).read_bytes() != path.read_bytes() for o in outs[1:]):
                mismatched.append(f"{command}:{path.name}")
    ok = compared > 0 and not mismatched
    report(9, ok, f"{compared} CSV files byte-identical across reruns and --threads 1/4"
                  + (f"; mismatched {mismatched}" if mismatched else ""))
    assert ok
