"""Explicit oscillator-bath simulation of the driven-bath model (model I).

A particle of mass M is bilinearly coupled to one bath of oscillators,
and an external agent pushes every oscillator with -alpha_k T'(x):

    M x''     = -V'(x) + sum_k c_k q_k - sum_k c_k^2/(m_k w_k^2) x
    m_k q_k'' = -m_k w_k^2 q_k + c_k x - alpha_k T'(x),   alpha_k = alpha_tilde c_k

The drive never acts on the particle directly. Integrating the bath out
gives friction eta (1 - alpha_tilde T''), a thermophoretic force -kappa T'
with kappa = alpha_tilde sum_k c_k^2/(m_k w_k^2), and a Langevin force of
strength 2 eta T0 set by the temperature at the starting point.
"""

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import parallel
from ._tables import CubicTable, table_eval
from .analysis import FitResult, autocovariance, fit_exponential_relaxation, noise_strength
from .errors import CorruptedStateError, DomainError, ParameterError
from .potentials import Potential

STATUS_OK, STATUS_NONFINITE, STATUS_DOMAIN = 0, 1, 2
TIME_CHUNK = 512


@dataclass
class BathStateI:
    """Phase-space point of particle plus bath."""

    spec: object
    q: np.ndarray
    p: np.ndarray
    x: float
    momentum: float
    mass: float
    alpha_tilde: float
    time: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.p = np.array(self.p, dtype=float)
        if self.q.shape != (self.spec.count,) or self.p.shape != (self.spec.count,):
            raise ParameterError("bath arrays must match the oscillator count")
        self.check_finite()

    @property
    def velocity(self):
        return self.momentum / self.mass

    def check_finite(self):
        if not (np.isfinite(self.x) and np.isfinite(self.momentum)
                and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise CorruptedStateError("non-finite value in bath state", step=self.step_index)

    def copy(self):
        return replace(self, q=self.q.copy(), p=self.p.copy())


def _generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def displaced_equilibrium(spec, alpha_tilde, field, x):
    """Oscillator rest positions (c_k / m_k w_k^2) [x - alpha_tilde T'(x)]."""
    return spec.c / (spec.m * spec.omega**2) * (x - alpha_tilde * float(field.grad(x)))


def sample_initial_bath(spec, alpha_tilde, field, x0, seed, mass=1.0, momentum=0.0):
    """Bath in thermal equilibrium at T(x0) around its displaced rest positions.

    q_k(0) = q~_k + (c_k/m_k w_k^2)[x0 - alpha_tilde T'(x0)] with
    q~_k ~ N(0, T(x0)/(m_k w_k^2)) and p_k ~ N(0, m_k T(x0)).
    """
    rng = _generator(seed)
    T = float(field.eval(x0))
    n = spec.count
    qt = rng.standard_normal(n) * np.sqrt(T / (spec.m * spec.omega**2))
    pk = rng.standard_normal(n) * np.sqrt(spec.m * T)
    q = qt + displaced_equilibrium(spec, alpha_tilde, field, x0)
    return BathStateI(spec, q, pk, float(x0), float(momentum), float(mass), float(alpha_tilde))


def max_stable_dt(spec, potential=None, mass=1.0, field_domain=None):
    """Largest dt allowed by dt < 0.1/max(w_k) and dt < 0.1 sqrt(M/|V''|)."""
    dt = 0.1 / float(np.max(spec.omega))
    if potential is not None and potential.kind != "none":
        lo, hi = field_domain if field_domain is not None else (-1.0, 1.0)
        curv = potential.max_curvature(lo, hi)
        if curv > 0:
            dt = min(dt, 0.1 * math.sqrt(mass / curv))
    return dt


@dataclass(frozen=True)
class _Compiled:
    """Coefficient tables shared by every realization of one run."""

    grad: CubicTable
    pot: CubicTable
    dpot: CubicTable
    stiffness: float
    tabulated: bool
    extras: dict = field(default_factory=dict)


def _compile(field, potential, n_table=4096):
    lo, hi = field.domain
    potential = potential or Potential.none()
    grad = CubicTable.from_function(field.grad, lo, hi, n_table)
    if potential.kind == "tabulated":
        pot = CubicTable.from_function(potential.V, lo, hi, n_table)
        dpot = CubicTable.from_function(potential.dV, lo, hi, n_table)
    else:
        pot = dpot = CubicTable.from_function(np.zeros_like, lo, hi, 8)
    return _Compiled(grad, pot, dpot, potential.stiffness if potential.kind == "harmonic" else 0.0,
                     potential.kind == "tabulated")


@numba.njit(cache=True, nogil=True)
def _verlet_kernel(x, v, q, p, M, kq, c, inv_m, alpha, ssum, k_harm, tabulated,
                   g_lo, g_dx, g_coef, v_lo, v_dx, v_coef, dv_lo, dv_dx, dv_coef,
                   dt, n_steps, record_every, want_energy,
                   rec_x, rec_v, rec_force, rec_energy, rec_work):
    """Velocity-Verlet for particle + bath, recording every ``record_every`` steps.

    Returns (status, step, x, v, work). The drive work is accumulated as
    -alpha * avg(T') * d(sum_k c_k q_k), exact for constant gradients.
    """
    n = q.shape[0]
    x_hi = g_lo + g_dx * g_coef.shape[0]
    if x < g_lo or x > x_hi:
        return STATUS_DOMAIN, 0, x, v, 0.0
    gp = table_eval(g_lo, g_dx, g_coef, x)
    s_cq = 0.0
    for k in range(n):
        s_cq += c[k] * q[k]
    dvx = k_harm * x
    if tabulated:
        dvx += table_eval(dv_lo, dv_dx, dv_coef, x)
    fx = -dvx + s_cq - ssum * x
    work = 0.0
    half = 0.5 * dt
    irec = 0
    for step in range(n_steps + 1):
        if step % record_every == 0:
            rec_x[irec] = x
            rec_v[irec] = v
            rec_force[irec] = s_cq - ssum * x
            rec_work[irec] = work
            if want_energy:
                e = 0.5 * M * v * v + 0.5 * k_harm * x * x
                if tabulated:
                    e += table_eval(v_lo, v_dx, v_coef, x)
                for k in range(n):
                    d = q[k] - c[k] * x / kq[k]
                    e += 0.5 * p[k] * p[k] * inv_m[k] + 0.5 * kq[k] * d * d
                rec_energy[irec] = e
            irec += 1
        if step == n_steps:
            break
        v += half * fx / M
        s_old = s_cq
        gp_old = gp
        s_cq = 0.0
        y = x - alpha * gp
        for k in range(n):
            p[k] += half * (c[k] * y - kq[k] * q[k])
            q[k] += dt * p[k] * inv_m[k]
            s_cq += c[k] * q[k]
        x += dt * v
        if not (x >= g_lo and x <= x_hi):
            return (STATUS_NONFINITE if not np.isfinite(x) else STATUS_DOMAIN), step + 1, x, v, work
        gp = table_eval(g_lo, g_dx, g_coef, x)
        y = x - alpha * gp
        for k in range(n):
            p[k] += half * (c[k] * y - kq[k] * q[k])
        dvx = k_harm * x
        if tabulated:
            dvx += table_eval(dv_lo, dv_dx, dv_coef, x)
        fx = -dvx + s_cq - ssum * x
        v += half * fx / M
        work -= alpha * 0.5 * (gp + gp_old) * (s_cq - s_old)
        if not (np.isfinite(v) and np.isfinite(s_cq)):
            return STATUS_NONFINITE, step + 1, x, v, work
    return STATUS_OK, n_steps, x, v, work


@dataclass
class TrajectoryI:
    """Recorded output of one microscopic run."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    bath_force: np.ndarray
    work: np.ndarray
    energy: np.ndarray = None
    final_state: BathStateI = None


def integrate(state, field, potential, dt, n_steps, record_every=1, energy=False, compiled=None):
    """Advance ``state`` by ``n_steps`` velocity-Verlet steps (in place).

    The bath force on the particle, sum_k c_k q_k - sum_k c_k^2/(m_k w_k^2) x,
    is recorded alongside x and v; ``energy=True`` also records the
    standard-model Hamiltonian (which excludes the drive).
    """
    spec = state.spec
    if dt <= 0 or n_steps < 0 or record_every < 1:
        raise ParameterError("need dt > 0, n_steps >= 0, record_every >= 1")
    limit = max_stable_dt(spec, potential, state.mass, field.domain)
    if dt >= limit * (1 + 1e-12):
        raise ParameterError(f"dt={dt} exceeds stability limit {limit:.4g}")
    comp = compiled or _compile(field, potential)
    n_rec = n_steps // record_every + 1
    rec = [np.zeros(n_rec) for _ in range(5)]
    v0 = state.momentum / state.mass
    status, step, x, v, work = _verlet_kernel(
        state.x, v0, state.q, state.p, state.mass, spec.m * spec.omega**2, spec.c, 1.0 / spec.m, state.alpha_tilde,
        spec.coupling_sum, comp.stiffness, comp.tabulated, *comp.grad.args(), *comp.pot.args(),
        *comp.dpot.args(), float(dt), int(n_steps), int(record_every), bool(energy), *rec)
    step_global = state.step_index + step
    if status == STATUS_DOMAIN:
        raise DomainError(f"particle left the temperature domain at step {step_global} (x={x!r})")
    if status == STATUS_NONFINITE:
        raise CorruptedStateError(f"non-finite state at step {step_global}", step=step_global)
    state.x, state.momentum = float(x), float(v) * state.mass
    state.time += n_steps * dt
    state.step_index = step_global
    state.check_finite()
    times = state.time - n_steps * dt + dt * record_every * np.arange(n_rec)
    return TrajectoryI(times, rec[0], rec[1], rec[2], rec[4], rec[3] if energy else None, state)


def step(state, field, potential, dt):
    """One velocity-Verlet step; returns a new state and leaves ``state`` untouched."""
    new = state.copy()
    integrate(new, field, potential, dt, 1)
    return new


def hamiltonian(state, potential=None):
    """Standard-model energy p^2/2M + V + sum_k [p_k^2/2m_k + m_k w_k^2 (q_k - c_k x/m_k w_k^2)^2/2]."""
    spec = state.spec
    pot = potential or Potential.none()
    d = state.q - spec.c * state.x / (spec.m * spec.omega**2)
    bath = np.sum(0.5 * state.p**2 / spec.m + 0.5 * spec.m * spec.omega**2 * d**2)
    return 0.5 * state.momentum**2 / state.mass + float(pot.V(state.x)) + float(bath)


# -- clamped particle: oscillators decouple and are propagated exactly --------

def _check_window(spec, duration):
    if duration >= spec.recurrence_time:
        raise ParameterError(
            f"measurement window {duration:.4g} reaches the bath recurrence time "
            f"{spec.recurrence_time:.4g}; add oscillators or shorten the run"
        )


def harmonic_force_series(c, omega, m, amp_q, amp_p, times, chunk=TIME_CHUNK):
    """F_r(t) = sum_k c_k [A_rk cos(w_k t) + B_rk/(m_k w_k) sin(w_k t)] for each row r."""
    times = np.asarray(times, dtype=float)
    a = amp_q * c
    b = amp_p * (c / (m * omega))
    out = np.empty((a.shape[0], times.size))
    for lo in range(0, times.size, chunk):
        ph = np.outer(times[lo:lo + chunk], omega)
        out[:, lo:lo + chunk] = a @ np.cos(ph).T + b @ np.sin(ph).T
    return out


def harmonic_force_window_mean(c, omega, m, amp_q, amp_p, window):
    """Exact time average of ``harmonic_force_series`` over [0, window]."""
    wt = omega * window
    cq = np.sin(wt) / wt
    cp = (1.0 - np.cos(wt)) / wt
    return amp_q @ (c * cq) + amp_p @ (c / (m * omega) * cp)


def _clamped_amplitudes(spec, T, n, rng):
    qt = rng.standard_normal((n, spec.count)) * np.sqrt(T / (spec.m * spec.omega**2))
    pk = rng.standard_normal((n, spec.count)) * np.sqrt(spec.m * T)
    return qt, pk


def _batches(total, size):
    return [(i, min(size, total - i)) for i in range(0, total, size)]


def clamped_force_series(spec, field, alpha_tilde, x, times, n_realizations, seed,
                         batch=50, threads=1):
    """Force on a particle held at ``x`` for independent thermal baths.

    Returns an (n_realizations, len(times)) array. With x fixed each
    oscillator is a driven harmonic oscillator started around its rest
    point, so q_k(t) is known exactly and no time stepping is involved.
    """
    times = np.asarray(times, dtype=float)
    _check_window(spec, float(np.max(times)) if times.size else 0.0)
    T = float(field.eval(x))
    offset = -alpha_tilde * float(field.grad(x)) * spec.coupling_sum

    def amplitudes(item):
        b, size = item
        return _clamped_amplitudes(spec, T, size, parallel.stream(seed, parallel.MICRO1_SERIES, b))

    items = [(i // batch, s) for i, s in _batches(n_realizations, batch)]
    amps = parallel.map_ordered(amplitudes, items, threads)
    qt = np.vstack([a[0] for a in amps])
    pk = np.vstack([a[1] for a in amps])
    # fixed-size time chunks keep the floating-point path independent of ``threads``
    chunks = [times[i:i + TIME_CHUNK] for i in range(0, times.size, TIME_CHUNK)] or [times]
    parts = parallel.map_ordered(
        lambda ts: harmonic_force_series(spec.c, spec.omega, spec.m, qt, pk, ts), chunks, threads)
    return np.hstack(parts) + offset


def clamped_mean_force(spec, field, alpha_tilde, x, window, n_realizations, seed,
                       batch=500, threads=1):
    """Per-realization time average of the clamped force over [0, window]."""
    _check_window(spec, window)
    T = float(field.eval(x))
    offset = -alpha_tilde * float(field.grad(x)) * spec.coupling_sum

    def work(item):
        b, size = item
        rng = parallel.stream(seed, parallel.MICRO1_MEAN, b)
        qt, pk = _clamped_amplitudes(spec, T, size, rng)
        return harmonic_force_window_mean(spec.c, spec.omega, spec.m, qt, pk, window) + offset

    parts = parallel.map_ordered(work, [(i // batch, s) for i, s in _batches(n_realizations, batch)],
                                 threads)
    return np.concatenate(parts)


def kick_relaxation(spec, field, alpha_tilde, x0, kick_velocity, mass, duration, dt,
                    n_realizations, seed, potential=None, record_every=None, threads=1):
    """Mean particle velocity after a kick, averaged over thermal bath realizations.

    Returns (times, mean_velocity, stderr).
    """
    _check_window(spec, duration)
    n_steps = int(round(duration / dt))
    record_every = record_every or max(1, n_steps // 600)
    comp = _compile(field, potential)

    def work(r):
        rng = parallel.stream(seed, parallel.MICRO1_KICK, r)
        st = sample_initial_bath(spec, alpha_tilde, field, x0, rng, mass=mass,
                                 momentum=mass * kick_velocity)
        return integrate(st, field, potential, dt, n_steps, record_every, compiled=comp).v

    vs = np.array(parallel.map_ordered(work, range(n_realizations), threads))
    times = dt * record_every * np.arange(vs.shape[1])
    stderr = vs.std(axis=0, ddof=1) / math.sqrt(n_realizations) if n_realizations > 1 else np.zeros(vs.shape[1])
    return times, vs.mean(axis=0), stderr


@dataclass(frozen=True)
class MeasurementConfig:
    """Protocol sizes for ``measure_effective_coefficients``.

    Unset durations are derived from the bath: ``sample_dt`` = 1/max(w_k),
    ``max_lag`` = min(1, t_rec/20), series length 10 lags and the mean-force
    window 0.8 t_rec, where t_rec is the recurrence time.
    """

    n_realizations: int = 1000
    n_mean_realizations: int = 20000
    series_duration: float = None
    sample_dt: float = None
    max_lag: float = None
    mean_window: float = None
    mass: float = 1.0
    kick_velocity: float = 2.0
    kick_duration: float = 3.0
    dt: float = None
    fit_skip: float = None
    x: float = 0.0


@dataclass
class EffectiveCoefficients:
    eta_hat: FitResult
    mean_force: float
    mean_force_stderr: float
    kappa_hat: float
    kappa_stderr: float
    lags: np.ndarray
    noise_correlation: np.ndarray
    noise_strength: float
    kick_times: np.ndarray = None
    kick_velocity: np.ndarray = None
    meta: dict = None


def measure_effective_coefficients(spec, field, alpha_tilde, config=None, seed=0, threads=1,
                                   potential=None, do_kick=True):
    """Estimate friction, thermophoretic coefficient and noise strength.

    * kappa_hat: mean bath force on a clamped particle equals -kappa T'(x).
    * noise: two-sided integral of the clamped-force autocovariance, which
      estimates 2 eta T(x).
    * eta_hat: exponential fit of the ensemble-mean velocity after a kick.
    """
    cfg = config or MeasurementConfig()
    w_max = float(np.max(spec.omega))
    t_rec = spec.recurrence_time
    sample_dt = cfg.sample_dt or 1.0 / w_max
    max_lag = cfg.max_lag or min(1.0, 0.05 * t_rec)
    series_duration = cfg.series_duration or min(10.0 * max_lag, 0.9 * t_rec)
    window = cfg.mean_window or 0.8 * t_rec
    x = cfg.x

    n_s = int(round(series_duration / sample_dt)) + 1
    times = sample_dt * np.arange(n_s)
    series = clamped_force_series(spec, field, alpha_tilde, x, times, cfg.n_realizations,
                                  seed, threads=threads)
    pooled_mean = float(series.mean())
    n_lag = int(round(max_lag / sample_dt))
    cov = autocovariance(series, n_lag, mean=pooled_mean)
    strength = noise_strength(cov, sample_dt)

    means = clamped_mean_force(spec, field, alpha_tilde, x, window, cfg.n_mean_realizations,
                               seed, threads=threads)
    mf = float(means.mean())
    mf_err = float(means.std(ddof=1) / math.sqrt(means.size))
    grad = float(field.grad(x))
    kappa_hat = -mf / grad if grad != 0 else float("nan")
    kappa_err = mf_err / abs(grad) if grad != 0 else float("nan")

    eta_fit, kt, kv = None, None, None
    if do_kick:
        dt = cfg.dt or max_stable_dt(spec, potential, cfg.mass, field.domain) * 0.999
        kt, kv, kerr = kick_relaxation(spec, field, alpha_tilde, x, cfg.kick_velocity, cfg.mass,
                                       cfg.kick_duration, dt, cfg.n_realizations, seed,
                                       potential=potential, threads=threads)
        skip = cfg.fit_skip if cfg.fit_skip is not None else 50.0 / w_max
        rate = fit_exponential_relaxation(kt, kv, t_min=skip)
        eta_fit = FitResult(rate.estimate * cfg.mass, rate.stderr * cfg.mass,
                            rate.residual_norm, rate.window)
    return EffectiveCoefficients(
        eta_hat=eta_fit, mean_force=mf, mean_force_stderr=mf_err, kappa_hat=kappa_hat,
        kappa_stderr=kappa_err, lags=sample_dt * np.arange(n_lag + 1), noise_correlation=cov,
        noise_strength=strength, kick_times=kt, kick_velocity=kv,
        meta=dict(sample_dt=sample_dt, series_duration=series_duration, window=window,
                  temperature=float(field.eval(x))),
    )
