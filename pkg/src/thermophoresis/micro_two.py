"""Explicit simulation of the spatially distributed bath model (model II).

Every site X of a periodic grid carries its own oscillator bath, thermal
at the local temperature T(X). The particle couples to site X through the
weight G(x, X) = g(x - X), and the resulting force weight is
F(x, X) = d/dx [x G(x, X)] = g(x - X) + x g'(x - X):

    M x''    = -V'(x) + (1/M_X) sum_i F(x, X_i) sum_k c_k Q_k(X_i)
    q_k''(X) = -w_k^2 q_k(X) + (c_k/m_k) x G(x, X)

with Q_k = q_k - c_k x G / (m_k w_k^2). Site sums carry the weight 1/M_X
so that they converge to (1/L) int dX. Integrating the baths out gives
friction eta_eff(x) = (eta/L) int F^2 dX and noise strength
2 D_eff(x) = 2 (eta/L) int F^2 T dX.
"""

import math
from dataclasses import dataclass, replace

import numba
import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from . import parallel
from .analysis import FitResult, autocovariance, fit_exponential_relaxation, noise_strength
from .errors import CorruptedStateError, DomainError, ParameterError
from .micro_one import TIME_CHUNK, harmonic_force_series, harmonic_force_window_mean
from .potentials import Potential

WEIGHT_KINDS = ("gaussian", "tabulated")


@dataclass(frozen=True)
class WeightFunction:
    """Coupling profile g(u) of width ``sigma`` on a periodic universe of size ``box_length``.

    ``gaussian``: g(u) = amplitude * exp(-u^2 / (2 sigma^2)).
    ``tabulated``: cubic spline through (u, g) samples, zero outside them.
    Offsets are wrapped to the minimum image in [-L/2, L/2).
    """

    kind: str = "gaussian"
    sigma: float = 0.1
    box_length: float = 10.0
    amplitude: float = 1.0
    table: tuple = None

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ParameterError(f"unknown weight kind {self.kind!r}")
        if not (self.sigma > 0 and self.box_length > 0 and self.amplitude > 0):
            raise ParameterError("sigma, box_length and amplitude must be positive")
        if self.kind == "tabulated":
            u, g = (np.asarray(a, dtype=float) for a in self.table)
            if np.any(g < 0):
                raise ParameterError("weight function must be non-negative")
            object.__setattr__(self, "table", (u, g))
            object.__setattr__(self, "_spline", CubicSpline(u, g, bc_type="natural"))

    def wrap(self, u):
        L = self.box_length
        return np.mod(np.asarray(u, dtype=float) + 0.5 * L, L) - 0.5 * L

    def g(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * (u / self.sigma) ** 2)
        lo, hi = self.table[0][0], self.table[0][-1]
        inside = (u >= lo) & (u <= hi)
        return np.where(inside, self.amplitude * self._spline(np.clip(u, lo, hi)), 0.0)

    def dg(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return -u / self.sigma**2 * self.g(u)
        lo, hi = self.table[0][0], self.table[0][-1]
        inside = (u >= lo) & (u <= hi)
        return np.where(inside, self.amplitude * self._spline(np.clip(u, lo, hi), 1), 0.0)

    def support(self):
        """Half-width of the u-range where g is non-negligible."""
        if self.kind == "gaussian":
            return min(10.0 * self.sigma, 0.5 * self.box_length)
        return min(max(abs(self.table[0][0]), abs(self.table[0][-1])), 0.5 * self.box_length)


def weight_G(w, x, X):
    """G(x, X) = g(x - X)."""
    return w.g(w.wrap(np.asarray(x, dtype=float) - X))


def weight_F(w, x, X):
    """F(x, X) = g(x - X) + x g'(x - X)."""
    x = np.asarray(x, dtype=float)
    u = w.wrap(x - X)
    return w.g(u) + x * w.dg(u)


def _quad_u(func, w):
    s = w.support()
    if w.kind == "gaussian":
        val, _ = integrate.quad(func, -s, s, points=[0.0], epsabs=1e-13, epsrel=1e-11, limit=400)
        return val
    # piecewise cubic: integrate knot interval by knot interval
    knots = w.table[0]
    knots = np.unique(np.clip(np.concatenate(([-s], knots, [s])), -s, s))
    return sum(integrate.quad(func, a, b, epsabs=1e-14, epsrel=1e-10)[0]
               for a, b in zip(knots[:-1], knots[1:]))


def eta_eff_two(w, x, eta=1.0):
    """(eta/L) int F(x, X)^2 dX over one period (adaptive quadrature in u = x - X)."""
    x = float(x)
    return eta / w.box_length * _quad_u(lambda u: float(w.g(u) + x * w.dg(u)) ** 2, w)


def eta_eff_two_gaussian(w, x, eta=1.0):
    """Closed form (eta/L) A^2 sqrt(pi) sigma (1 + x^2/(2 sigma^2)) for gaussian g."""
    return eta * w.amplitude**2 * math.sqrt(math.pi) * w.sigma / w.box_length * (
        1.0 + np.asarray(x, dtype=float) ** 2 / (2.0 * w.sigma**2))


def d_eff_two(w, field, x, eta=1.0):
    """(eta/L) int F(x, X)^2 T(X) dX, with X = x - u wrapped into the box."""
    x = float(x)

    def integrand(u):
        X = float(w.wrap(x - u))
        return float(w.g(u) + x * w.dg(u)) ** 2 * float(field.eval(X))

    return eta / w.box_length * _quad_u(integrand, w)


def site_grid(box_length, n_sites):
    dX = box_length / n_sites
    return -0.5 * box_length + (np.arange(n_sites) + 0.5) * dX


def site_sums(w, field, x, n_sites, eta=1.0):
    """Discrete counterparts (1/M_X) sum_i F_i^2 and (1/M_X) sum_i F_i^2 T_i, times eta."""
    X = site_grid(w.box_length, n_sites)
    F2 = weight_F(w, x, X) ** 2
    return eta * F2.mean(), eta * float(np.mean(F2 * field.eval(X)))


@dataclass
class BathFieldII:
    """Particle plus one oscillator bath per grid site.

    ``q`` and ``vq`` have shape (n_sites, N); ``temperatures`` are T(X_i).
    """

    spec: object
    weight: WeightFunction
    sites: np.ndarray
    temperatures: np.ndarray
    q: np.ndarray
    vq: np.ndarray
    x: float
    momentum: float
    mass: float
    time: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.vq = np.array(self.vq, dtype=float)
        shape = (self.sites.size, self.spec.count)
        if self.q.shape != shape or self.vq.shape != shape:
            raise ParameterError("site oscillator arrays must have shape (n_sites, N)")
        if not math.isclose(self.sites.size * (self.sites[1] - self.sites[0]) if self.sites.size > 1
                            else self.weight.box_length, self.weight.box_length, rel_tol=1e-9):
            raise ParameterError("site spacing times site count must equal the box length")
        if np.any(self.temperatures < 0):
            raise ParameterError("site temperatures must be non-negative")
        self.check_finite()

    @property
    def n_sites(self):
        return self.sites.size

    @property
    def velocity(self):
        return self.momentum / self.mass

    def check_finite(self):
        if not (np.isfinite(self.x) and np.isfinite(self.momentum)
                and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.vq))):
            raise CorruptedStateError("non-finite value in bath field", step=self.step_index)

    def copy(self):
        return replace(self, q=self.q.copy(), vq=self.vq.copy())


def _site_amplitudes(spec, temps, n_sites, rng):
    """Displacements Q and velocities of every site oscillator; variances carry M_X."""
    scale = np.sqrt(n_sites * np.asarray(temps, dtype=float))[:, None]
    Q = rng.standard_normal((n_sites, spec.count)) * scale / np.sqrt(spec.m * spec.omega**2)
    V = rng.standard_normal((n_sites, spec.count)) * scale / np.sqrt(spec.m)
    return Q, V


def sample_bath_field(spec, weight, field, n_sites, x0, seed, mass=1.0, momentum=0.0,
                      temperature_scale=1.0):
    """Each site in local equilibrium at T(X_i) around its rest point c_k x0 G/(m_k w_k^2).

    ``temperature_scale`` multiplies every site temperature; 0 gives a cold
    bath at rest.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = site_grid(weight.box_length, n_sites)
    temps = np.asarray(field.eval(X), dtype=float)
    Q, V = _site_amplitudes(spec, temps * temperature_scale, n_sites, rng)
    G = weight_G(weight, x0, X)
    rest = (spec.c / (spec.m * spec.omega**2))[None, :] * (x0 * G)[:, None]
    return BathFieldII(spec, weight, X, temps, Q + rest, V, float(x0), float(momentum), float(mass))


@numba.njit(cache=True, nogil=True)
def _gauss_weights(x, sites, sigma, amp, L, G, F):
    for i in range(sites.shape[0]):
        u = x - sites[i]
        u = (u + 0.5 * L) % L - 0.5 * L
        gi = amp * math.exp(-0.5 * (u / sigma) ** 2)
        G[i] = gi
        F[i] = gi - x * u / sigma**2 * gi


@numba.njit(cache=True, nogil=True)
def _force(x, q, c, K0, G, F, k_harm):
    n_sites, n = q.shape
    total = 0.0
    for i in range(n_sites):
        s = 0.0
        for k in range(n):
            s += c[k] * q[i, k]
        total += F[i] * (s - x * G[i] * K0)
    return -k_harm * x + total / n_sites


@numba.njit(cache=True, nogil=True)
def _energy(x, v, M, q, vq, c, m, w2, G, k_harm):
    n_sites, n = q.shape
    e = 0.0
    for i in range(n_sites):
        for k in range(n):
            Q = q[i, k] - c[k] * x * G[i] / (m[k] * w2[k])
            e += 0.5 * m[k] * vq[i, k] ** 2 + 0.5 * m[k] * w2[k] * Q * Q
    return 0.5 * M * v * v + 0.5 * k_harm * x * x + e / n_sites


@numba.njit(cache=True, nogil=True)
def _verlet_two(x, v, q, vq, M, c, m, w2, K0, sites, sigma, amp, L, k_harm,
                dt, n_steps, record_every, want_energy, rec_x, rec_v, rec_e):
    n_sites, n = q.shape
    G = np.empty(n_sites)
    F = np.empty(n_sites)
    cm = c / m
    half = 0.5 * dt
    _gauss_weights(x, sites, sigma, amp, L, G, F)
    f = _force(x, q, c, K0, G, F, k_harm)
    irec = 0
    for step in range(n_steps + 1):
        if step % record_every == 0:
            rec_x[irec] = x
            rec_v[irec] = v
            if want_energy:
                rec_e[irec] = _energy(x, v, M, q, vq, c, m, w2, G, k_harm)
            irec += 1
        if step == n_steps:
            break
        v += half * f / M
        for i in range(n_sites):
            drive = x * G[i]
            for k in range(n):
                vq[i, k] += half * (cm[k] * drive - w2[k] * q[i, k])
                q[i, k] += dt * vq[i, k]
        x += dt * v
        if not (abs(x) <= 0.5 * L):
            return 1 if not np.isfinite(x) else 2, step + 1, x, v
        _gauss_weights(x, sites, sigma, amp, L, G, F)
        for i in range(n_sites):
            drive = x * G[i]
            for k in range(n):
                vq[i, k] += half * (cm[k] * drive - w2[k] * q[i, k])
        f = _force(x, q, c, K0, G, F, k_harm)
        v += half * f / M
        if not np.isfinite(v):
            return 1, step + 1, x, v
    return 0, n_steps, x, v


@dataclass
class TrajectoryII:
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray = None
    final_state: BathFieldII = None


def integrate_two(state, potential, dt, n_steps, record_every=1, energy=False):
    """Velocity-Verlet for particle + all site baths (gaussian weight only), in place."""
    w = state.weight
    if w.kind != "gaussian":
        raise ParameterError("microscopic runs support the gaussian weight only")
    potential = potential or Potential.none()
    if potential.kind == "tabulated":
        raise ParameterError("microscopic model-II runs support none or harmonic potentials")
    spec = state.spec
    limit = 0.1 / float(np.max(spec.omega))
    if potential.kind == "harmonic":
        limit = min(limit, 0.1 * math.sqrt(state.mass / potential.stiffness))
    if not 0 < dt < limit * (1 + 1e-12):
        raise ParameterError(f"dt={dt} outside (0, {limit:.4g})")
    n_rec = n_steps // record_every + 1
    rx, rv, re = np.zeros(n_rec), np.zeros(n_rec), np.zeros(n_rec)
    status, step, x, v = _verlet_two(
        state.x, state.velocity, state.q, state.vq, state.mass, spec.c, spec.m, spec.omega**2,
        spec.coupling_sum, state.sites, w.sigma, w.amplitude, w.box_length, potential.stiffness,
        float(dt), int(n_steps), int(record_every), bool(energy), rx, rv, re)
    step_global = state.step_index + step
    if status == 2:
        raise DomainError(f"particle left the box at step {step_global} (x={x!r})")
    if status == 1:
        raise CorruptedStateError(f"non-finite state at step {step_global}", step=step_global)
    state.x, state.momentum = float(x), float(v) * state.mass
    state.time += n_steps * dt
    state.step_index = step_global
    state.check_finite()
    times = state.time - n_steps * dt + dt * record_every * np.arange(n_rec)
    return TrajectoryII(times, rx, rv, re if energy else None, state)


def bath_energy(state, potential=None):
    w = state.weight
    G = weight_G(w, state.x, state.sites)
    spec = state.spec
    k = (potential or Potential.none()).stiffness
    return float(_energy(state.x, state.velocity, state.mass, state.q, state.vq, spec.c, spec.m,
                         spec.omega**2, G, k))


# -- clamped particle ---------------------------------------------------------

def _clamped_modes(spec, weight, temps, sites, x, size, rng):
    """Per-mode force amplitudes (1/M_X) sum_i F_i Q_ki and the momentum analogue."""
    F = weight_F(weight, x, sites)
    n_sites = sites.size
    A = np.empty((size, spec.count))
    B = np.empty((size, spec.count))
    for r in range(size):
        Q, V = _site_amplitudes(spec, temps, n_sites, rng)
        A[r] = F @ Q / n_sites
        B[r] = F @ (V * spec.m) / n_sites
    return A, B


def clamped_force_series(spec, weight, field, n_sites, x, times, n_realizations, seed,
                         batch=50, threads=1):
    """Force on a particle held at ``x``; (n_realizations, len(times)) array.

    Each site oscillator oscillates freely about its rest point, so the
    force is a sum of harmonics with Gaussian amplitudes drawn site by site.
    """
    times = np.asarray(times, dtype=float)
    if times.size and float(times.max()) >= spec.recurrence_time:
        raise ParameterError("measurement window reaches the bath recurrence time")
    sites = site_grid(weight.box_length, n_sites)
    temps = np.asarray(field.eval(sites), dtype=float)

    def amplitudes(item):
        b, size = item
        return _clamped_modes(spec, weight, temps, sites, x, size,
                              parallel.stream(seed, parallel.MICRO2_SERIES, b))

    items = [(i // batch, min(batch, n_realizations - i)) for i in range(0, n_realizations, batch)]
    amps = parallel.map_ordered(amplitudes, items, threads)
    A = np.vstack([a[0] for a in amps])
    B = np.vstack([a[1] for a in amps])
    # fixed-size time chunks keep the floating-point path independent of ``threads``
    chunks = [times[i:i + TIME_CHUNK] for i in range(0, times.size, TIME_CHUNK)] or [times]
    parts = parallel.map_ordered(
        lambda ts: harmonic_force_series(spec.c, spec.omega, spec.m, A, B, ts), chunks, threads)
    return np.hstack(parts)


def clamped_mean_force(spec, weight, field, n_sites, x, window, n_realizations, seed,
                       batch=50, threads=1):
    """Per-realization time average of the clamped force over [0, window]."""
    if window >= spec.recurrence_time:
        raise ParameterError("measurement window reaches the bath recurrence time")
    sites = site_grid(weight.box_length, n_sites)
    temps = np.asarray(field.eval(sites), dtype=float)

    def work(item):
        b, size = item
        A, B = _clamped_modes(spec, weight, temps, sites, x, size,
                              parallel.stream(seed, parallel.MICRO2_KICK, b))
        return harmonic_force_window_mean(spec.c, spec.omega, spec.m, A, B, window)

    items = [(i // batch, min(batch, n_realizations - i)) for i in range(0, n_realizations, batch)]
    return np.concatenate(parallel.map_ordered(work, items, threads))


def kick_friction(spec, weight, field, n_sites, x0, mass, kick_velocity, duration, dt,
                  fit_skip=None, temperature_scale=0.0, seed=0):
    """Friction from the velocity decay after a small kick.

    The default bath is cold (temperature_scale=0): the linear-response
    friction does not depend on temperature, while thermal motion would
    carry the particle out of the narrow coupling window. Returns
    (FitResult for eta, times, velocities).
    """
    if duration >= spec.recurrence_time:
        raise ParameterError("kick duration reaches the bath recurrence time")
    state = sample_bath_field(spec, weight, field, n_sites, x0, seed, mass=mass,
                              momentum=mass * kick_velocity, temperature_scale=temperature_scale)
    n_steps = int(round(duration / dt))
    tr = integrate_two(state, None, dt, n_steps, max(1, n_steps // 600))
    skip = fit_skip if fit_skip is not None else 50.0 / float(np.max(spec.omega))
    rate = fit_exponential_relaxation(tr.times, tr.v, t_min=skip)
    fit = FitResult(rate.estimate * mass, rate.stderr * mass, rate.residual_norm, rate.window)
    return fit, tr.times, tr.v


@dataclass
class ClampedStatisticsII:
    lags: np.ndarray
    correlation: np.ndarray
    noise_strength: float
    mean_force: float
    mean_force_stderr: float


def measure_clamped_noise(spec, weight, field, n_sites, x, n_realizations, seed, sample_dt=None,
                          max_lag=None, n_mean_realizations=0, threads=1):
    """Autocovariance of the clamped force and its two-sided integral (estimates 2 D_eff)."""
    t_rec = spec.recurrence_time
    sample_dt = sample_dt or 1.0 / float(np.max(spec.omega))
    max_lag = max_lag or min(1.0, 0.05 * t_rec)
    n_lag = int(round(max_lag / sample_dt))
    times = sample_dt * np.arange(10 * n_lag + 1)
    series = clamped_force_series(spec, weight, field, n_sites, x, times, n_realizations, seed,
                                  threads=threads)
    # the clamped force has zero ensemble mean in this model
    cov = autocovariance(series, n_lag, mean=0.0)
    mf, mf_err = float(series.mean()), float("nan")
    if n_mean_realizations:
        means = clamped_mean_force(spec, weight, field, n_sites, x, 0.8 * t_rec,
                                   n_mean_realizations, seed, threads=threads)
        mf, mf_err = float(means.mean()), float(means.std(ddof=1) / math.sqrt(means.size))
    return ClampedStatisticsII(sample_dt * np.arange(n_lag + 1), cov,
                               noise_strength(cov, sample_dt), mf, mf_err)
