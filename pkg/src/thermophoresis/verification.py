"""Cross-level self-checks run by ``thermophoresis verify``.

Each check is sized to finish in seconds; together they exercise every
module against an independent reference (closed form, quadrature, or a
second numerical route).
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import analysis as an
from . import fokker_planck as fp
from . import langevin as lg
from . import micro_one as m1
from . import micro_two as m2
from . import spectral
from .micro_two import WeightFunction
from .potentials import Potential
from .temperature import TemperatureField


@dataclass
class CheckResult:
    name: str
    value: float
    target: float
    tolerance: str
    passed: bool
    seconds: float = 0.0


def _rel(value, target):
    return abs(value - target) / abs(target)


def check_kernel_closed_form(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=10.0)
    taus = np.linspace(0.0, 2.0, 20)
    err = max(abs(spectral.kernel(model, t) - spectral.kernel_quad(model, t)) for t in taus)
    return "kernel closed form vs quadrature", err, 0.0, "abs <= 1e-8", err <= 1e-8


def check_kernel_integral(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=10.0)
    val = spectral.kernel_integral(model)
    return "kernel integral equals eta", val, 1.0, "abs <= 1e-6", abs(val - 1.0) <= 1e-6


def check_bath_reconstruction(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=10.0)
    spec = spectral.discretize(model, 4000)
    taus = np.linspace(0.0, 5.0 / model.cutoff, 51)
    err = float(np.max(np.abs(spec.correlation(taus) / spectral.kernel(model, taus) - 1.0)))
    return "discrete bath reconstructs K(tau)", err, 0.0, "rel <= 0.02", err <= 0.02


def check_fpe_closed_form(seed):
    fld = TemperatureField.linear(1.0, 0.2, (-5, 5))
    p = lg.EffectiveParamsI(fld, kappa=0.5)
    a, D = lg.fpe_coefficients(p)
    P = fp.evolve(a, D, fp.DensityProfile.uniform(-5, 5, 512), fp.stable_dt(a, D, -5, 5, 512), 100.0)
    err = float(np.max(np.abs(P.values - fp.steady_state_I(p, n=512).values)))
    return "FPE long-time limit vs closed form (model I)", err, 0.0, "Linf <= 1e-3", err <= 1e-3


def check_fpe_mass(seed):
    fld = TemperatureField.exponential(1.0, 5.0, (-5, 5))
    p = lg.EffectiveParamsI(fld, kappa=0.5, alpha_tilde=4.0)
    a, D = lg.fpe_coefficients(p)
    P0 = fp.DensityProfile.gaussian(-5, 5, 256, 1.0, 0.5)
    P = fp.evolve(a, D, P0, fp.stable_dt(a, D, -5, 5, 256), 2.0)
    err = P.meta["mass_error"]
    return "FPE mass conservation", err, 0.0, "abs <= 1e-10", err <= 1e-10


def check_zero_flux(seed):
    w = WeightFunction(sigma=0.5, box_length=10.0)
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    p = lg.EffectiveParamsII(w, fld, eta=1.0 / (math.sqrt(math.pi) * 0.05))
    a, D = lg.fpe_coefficients(p)
    ss = fp.steady_state_numeric(a, D, -5.0, 5.0, 512)
    res = fp.zero_flux_residual(a, D, ss)
    return "numeric steady state has zero flux", res, 0.0, "max|J| <= 1e-8", res <= 1e-8


def check_weight_integrals(seed):
    w = WeightFunction(sigma=0.1, box_length=10.0)
    err = max(_rel(m2.eta_eff_two(w, x), float(m2.eta_eff_two_gaussian(w, x)))
              for x in (0.0, 0.05, 0.2))
    return "eta_eff (model II) quadrature vs closed form", err, 0.0, "rel <= 1e-8", err <= 1e-8


def check_deff_constant(seed):
    w = WeightFunction(sigma=0.1, box_length=10.0)
    fld = TemperatureField.constant(1.7, (-5, 5))
    err = _rel(m2.d_eff_two(w, fld, 0.15), 1.7 * m2.eta_eff_two(w, 0.15))
    return "D_eff = eta_eff T at constant T", err, 0.0, "rel <= 1e-10", err <= 1e-10


def check_overdamped_I_slope(seed):
    fld = TemperatureField.linear(1.0, 0.2, (-5, 5))
    p = lg.EffectiveParamsI(fld, kappa=0.5)
    ens = lg.run_ensemble("overdamped1", p, 20000, 0.02, 40.0, seed)
    fit = an.fit_log_slope(an.histogram(ens, pool=True, n_bins=32))
    return "overdamped-I stationary slope", fit.estimate, -0.1, "rel <= 0.1", _rel(fit.estimate, -0.1) <= 0.1


def check_overdamped_II_soret(seed):
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    w = WeightFunction(sigma=0.1, box_length=10.0)
    p = lg.EffectiveParamsII(w, fld, eta=1.0 / (math.sqrt(math.pi) * 0.01), approximation="local_flat")
    ens = lg.run_ensemble("overdamped2", p, 20000, 0.02, 40.0, seed)
    h = an.histogram(ens, pool=True, n_bins=32)
    ratio = an.estimate_soret(h, fld).mean_ratio((-2.5, 2.5))
    return "overdamped-II Soret ratio S_T T", ratio, 1.0, "rel <= 0.15", _rel(ratio, 1.0) <= 0.15


def check_equipartition(seed):
    fld = TemperatureField.constant(1.0, (-5, 5))
    p = lg.EffectiveParamsI(fld, mass=1.0, potential=Potential.harmonic(1.0, 1.0))
    ens = lg.run_ensemble("underdamped1", p, 4000, 0.02, 40.0, seed, x0=0.0, n_records=41)
    var = float(np.var(ens.x[:, 20:]))
    return "underdamped trap variance T/(M w0^2)", var, 1.0, "rel <= 0.05", _rel(var, 1.0) <= 0.05


def check_micro1_energy(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=10.0)
    spec = spectral.discretize(model, 500, omega_max=100.0)
    fld = TemperatureField.constant(1.0, (-5, 5))
    st = m1.sample_initial_bath(spec, 0.0, fld, 0.0, seed, momentum=0.5)
    tr = m1.integrate(st, fld, Potential.harmonic(1.0, 1.0), 0.01 / 100.0, 20000, 200, energy=True)
    drift = float(np.max(np.abs(tr.energy - tr.energy[0])) / abs(tr.energy[0]))
    return "micro-I energy drift (alpha=0)", drift, 0.0, "rel <= 1e-6", drift <= 1e-6


def check_micro1_force(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=50.0)
    spec = spectral.discretize(model, 2000, omega_max=500.0)
    fld = TemperatureField.linear(1.0, 0.1, (-5, 5))
    alpha = spectral.alpha_tilde_for_kappa(spec, 0.5)
    means = m1.clamped_mean_force(spec, fld, alpha, 0.0, 0.8 * spec.recurrence_time, 30000, seed)
    val = float(means.mean())
    return "micro-I clamped mean force -kappa T'", val, -0.05, "rel <= 0.15", _rel(val, -0.05) <= 0.15


def check_micro2_noise(seed):
    model = spectral.SpectralModel(eta=1.0, cutoff=50.0)
    spec = spectral.discretize(model, 400, omega_max=500.0)
    w = WeightFunction(sigma=0.1, box_length=10.0)
    fld = TemperatureField.linear(1.0, 0.1, (-5, 5))
    st = m2.measure_clamped_noise(spec, w, fld, 128, 0.0, 200, seed, max_lag=0.5)
    target = 2.0 * m2.d_eff_two(w, fld, 0.0)
    return ("micro-II clamped noise 2 D_eff", st.noise_strength, target, "rel <= 0.1",
            _rel(st.noise_strength, target) <= 0.1)


def check_determinism(seed):
    fld = TemperatureField.linear(1.0, 0.2, (-5, 5))
    p = lg.EffectiveParamsI(fld, kappa=0.5)
    a = lg.run_ensemble("overdamped1", p, 3000, 0.01, 1.0, seed, block_size=512)
    b = lg.run_ensemble("overdamped1", p, 3000, 0.01, 1.0, seed, block_size=512, threads=3)
    same = a.x.tobytes() == b.x.tobytes()
    return "ensemble independent of thread count", float(same), 1.0, "identical", same


CHECKS = (
    check_kernel_closed_form, check_kernel_integral, check_bath_reconstruction,
    check_fpe_closed_form, check_fpe_mass, check_zero_flux, check_weight_integrals,
    check_deff_constant, check_overdamped_I_slope, check_overdamped_II_soret,
    check_equipartition, check_micro1_energy, check_micro1_force, check_micro2_noise,
    check_determinism,
)


def run_checks(seed=0, checks=CHECKS):
    results = []
    for check in checks:
        t0 = time.perf_counter()
        name, value, target, tol, ok = check(seed)
        results.append(CheckResult(name, float(value), float(target), tol, bool(ok),
                                   time.perf_counter() - t0))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'value':>13}  {'target':>10}  {'tolerance':<15}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:>13.6g}  {r.target:>10.4g}  {r.tolerance:<15}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} checks passed")
    return "\n".join(lines)
