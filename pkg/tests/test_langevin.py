import math

import numpy as np
import pytest

from thermophoresis import analysis as an
from thermophoresis import langevin as lg
from thermophoresis.errors import ModelValidityError, ParameterError
from thermophoresis.micro_two import WeightFunction
from thermophoresis.potentials import Potential
from thermophoresis.temperature import TemperatureField


def linear(grad=0.2, domain=(-5, 5)):
    return TemperatureField.linear(1.0, grad, domain)


def test_effective_coefficients_I():
    fld = TemperatureField.exponential(1.0, 5.0, (-5, 5))
    p = lg.EffectiveParamsI(fld, eta=2.0, alpha_tilde=3.0, kappa=0.5)
    x = 1.0
    eff = 2.0 * (1 - 3.0 * fld.curv(x))
    assert p.eta_eff(x) == pytest.approx(eff)
    assert p.drift(x) == pytest.approx(-0.5 * fld.grad(x) / eff)
    assert p.diffusion(x) == pytest.approx(2.0 * 1.0 / eff**2)


def test_negative_effective_friction_is_rejected():
    fld = TemperatureField.exponential(1.0, 1.0, (-2, 2))
    with pytest.raises(ModelValidityError):
        lg.EffectiveParamsI(fld, alpha_tilde=1.5)


def test_box_must_lie_in_domain():
    with pytest.raises(ParameterError):
        lg.EffectiveParamsI(linear(), box=(-6, 5))


def test_overdamped_step_without_noise():
    p = lg.EffectiveParamsI(linear(), kappa=0.5)
    x = lg.step_overdamped_I(np.array([0.0, 1.0]), p, 0.01, [0.0, 0.0])
    np.testing.assert_allclose(x, [-0.001, 0.999], rtol=1e-9)


def test_overdamped_step_noise_scale():
    p = lg.EffectiveParamsI(TemperatureField.constant(2.0, (-5, 5)), eta=0.5)
    x = lg.step_overdamped_I(np.zeros(1), p, 0.01, [1.0])
    # D = eta T0 / eta^2 = 4
    assert x[0] == pytest.approx(math.sqrt(2 * 4.0 * 0.01), rel=1e-6)


def test_overdamped_step_reflects_at_wall():
    p = lg.EffectiveParamsI(TemperatureField.constant(1.0, (-1, 1)))
    x = lg.step_overdamped_I(np.array([0.95]), p, 0.01, [1.0])
    assert x[0] == pytest.approx(2 * 1.0 - (0.95 + math.sqrt(0.02)), rel=1e-9)


def test_underdamped_step_free_deterministic():
    # no friction-free motion: BAOAB reduces to v -> c1 v, x -> x + dt (v + c1 v)/2
    p = lg.EffectiveParamsI(TemperatureField.constant(1.0, (-5, 5)), mass=2.0, eta=1.0)
    dt = 0.01
    x, v = lg.step_underdamped_I(np.zeros(1), np.ones(1), p, dt, [0.0])
    c1 = math.exp(-dt * 1.0 / 2.0)
    assert v[0] == pytest.approx(c1, rel=1e-12)
    assert x[0] == pytest.approx(0.5 * dt * (1 + c1), rel=1e-12)


def test_underdamped_dt_guard():
    p = lg.EffectiveParamsI(linear(), mass=0.05)
    with pytest.raises(ParameterError):
        lg.run_ensemble("underdamped1", p, 10, 0.006, 1.2, 0)


def test_t_final_zero_returns_initial_state():
    p = lg.EffectiveParamsI(linear(), kappa=0.5)
    ens = lg.run_ensemble("overdamped1", p, 50, 0.01, 0.0, 4, x0=0.5)
    assert ens.x.shape == (50, 1)
    assert np.all(ens.x == 0.5)


def test_deterministic_and_thread_independent():
    p = lg.EffectiveParamsI(linear(), mass=0.5, kappa=0.5)
    a = lg.run_ensemble("underdamped1", p, 700, 0.01, 1.0, 11, block_size=128)
    b = lg.run_ensemble("underdamped1", p, 700, 0.01, 1.0, 11, block_size=128, threads=4)
    c = lg.run_ensemble("underdamped1", p, 700, 0.01, 1.0, 12, block_size=128)
    assert a.x.tobytes() == b.x.tobytes() and a.v.tobytes() == b.v.tobytes()
    assert a.x.tobytes() != c.x.tobytes()


def test_free_diffusion_msd():
    p = lg.EffectiveParamsI(TemperatureField.constant(1.0, (-50, 50)), eta=2.0)
    ens = lg.run_ensemble("overdamped1", p, 20000, 0.01, 2.0, 5, x0=0.0, n_records=3)
    msd = np.mean(ens.x[:, -1] ** 2)
    assert msd == pytest.approx(2 * 0.5 * 2.0, rel=0.05)


def test_terminal_drift_velocity_underdamped():
    # -kappa T' = -0.05 balanced by friction eta = 1
    p = lg.EffectiveParamsI(TemperatureField.linear(1.0, 0.05, (-19, 19)), kappa=1.0)
    ens = lg.run_ensemble("underdamped1", p, 10000, 0.01, 6.0, 2, x0=0.0, n_records=13)
    v_mean = ens.v[:, 6:].mean()
    assert v_mean == pytest.approx(-0.05, rel=0.05)


def test_underdamped_equipartition():
    p = lg.EffectiveParamsI(TemperatureField.constant(1.5, (-5, 5)), mass=2.0,
                            potential=Potential.harmonic(2.0, 1.0))
    ens = lg.run_ensemble("underdamped1", p, 10000, 0.02, 20.0, 8, x0=0.0, n_records=11)
    assert np.var(ens.v[:, 5:]) == pytest.approx(1.5 / 2.0, rel=0.02)


def test_uniform_stays_uniform_with_walls():
    p = lg.EffectiveParamsI(TemperatureField.constant(1.0, (-1, 1)))
    ens = lg.run_ensemble("overdamped1", p, 100000, 0.001, 1.0, 6, n_records=5)
    h = an.histogram_samples(ens.x[:, -1], -1, 1, 16)
    assert np.max(np.abs(h.values - 0.5)) <= 0.02 * 0.5 * 4


def test_thermophobic_drift():
    p = lg.EffectiveParamsI(linear(), kappa=0.5)
    ens = lg.run_ensemble("overdamped1", p, 5000, 0.01, 20.0, 1, n_records=3)
    assert ens.x[:, -1].mean() < -0.5


def test_euler_maruyama_weak_error_is_first_order():
    # discrete OU x' = x - k x dt/eta + sqrt(2 D dt) xi has stationary variance
    # (D eta/k) / (1 - k dt/(2 eta)); compare the bias at dt and dt/2
    k, T = 1.0, 1.0
    p = lg.EffectiveParamsI(TemperatureField.constant(T, (-20, 20)),
                            potential=Potential.harmonic(1.0, math.sqrt(k)))
    biases = []
    for dt in (0.2, 0.1):
        ens = lg.run_ensemble("overdamped1", p, 100000, dt, 10.0, 9, x0=0.0, n_records=3)
        var = np.var(ens.x[:, -1])
        exact = T / k / (1 - k * dt / 2)
        assert var == pytest.approx(exact, rel=0.015)
        biases.append(var - T / k)
    assert 1.4 <= biases[0] / biases[1] <= 2.8


def test_model_two_effective_coefficients():
    w = WeightFunction(sigma=0.5, box_length=10.0)
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    full = lg.EffectiveParamsII(w, fld, eta=2.0)
    x = 1.0
    eta_eff = 2.0 * math.sqrt(math.pi) * 0.5 / 10 * (1 + x**2 / (2 * 0.25))
    assert full.eta_eff(x) == pytest.approx(eta_eff, rel=1e-5)
    local = lg.EffectiveParamsII(w, fld, eta=2.0, approximation="local")
    assert local.diffusion(x) == pytest.approx(fld.eval(x) / eta_eff, rel=1e-5)
    flat = lg.EffectiveParamsII(w, fld, eta=2.0, approximation="local_flat")
    assert flat.eta_eff(x) == pytest.approx(2.0 * math.sqrt(math.pi) * 0.05, rel=1e-6)
    with pytest.raises(ParameterError):
        lg.EffectiveParamsII(w, fld, approximation="exact")


def test_model_two_overdamped_step():
    w = WeightFunction(sigma=0.1, box_length=10.0)
    fld = TemperatureField.exponential(1.0, 10.0, (-5, 5))
    p = lg.EffectiveParamsII(w, fld, eta=1 / (math.sqrt(math.pi) * 0.01), approximation="local_flat")
    x = lg.step_overdamped_II(np.array([1.0]), p, 0.01, [1.0])
    assert x[0] == pytest.approx(1.0 + math.sqrt(2 * fld.eval(1.0) * 0.01), rel=1e-4)
