"""Effective stochastic dynamics and ensemble generation.

Three dynamics are provided, all on a box with reflecting walls:

* ``underdamped1``: M x'' = -V' - eta_eff(x) x' - kappa T' + F_L, with
  eta_eff = eta (1 - alpha_tilde T'') and <F_L F_L> = 2 eta T0 delta.
* ``overdamped1``:  dx = -(V' + kappa T')/eta_eff dt + sqrt(2 eta T0/eta_eff^2) dW.
* ``overdamped2``:  dx = -V'/eta_eff dt + sqrt(2 D(x)) dW with
  D = D_eff/eta_eff^2 built from the spatially distributed bath.

Overdamped equations are read in the Ito sense, which matches Fokker-Planck
equations carrying the whole diffusion coefficient inside the second
derivative. T0 is the temperature at the field's reference point.
"""

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate

from . import parallel
from ._tables import CubicTable, fold_into_box, table_eval
from .errors import CorruptedStateError, ModelValidityError, ParameterError
from .micro_two import WeightFunction
from .potentials import Potential

MODELS = ("underdamped1", "overdamped1", "overdamped2")
APPROXIMATIONS = ("full", "local", "local_flat")
TABLE_POINTS = 1024
BLOCK_SIZE = 2048
CHUNK_STEPS = 256


def _box(box, domain):
    lo, hi = (float(b) for b in box)
    if not lo < hi:
        raise ParameterError(f"empty box {box}")
    if lo < domain[0] - 1e-12 or hi > domain[1] + 1e-12:
        raise ParameterError(f"box {box} exceeds the temperature domain {domain}")
    return lo, hi


@dataclass(frozen=True)
class EffectiveParamsI:
    """Parameters of the effective driven-bath dynamics.

    ``T0`` defaults to the field's temperature at its reference point.
    ``box`` defaults to the field domain.
    """

    field: object
    mass: float = 1.0
    eta: float = 1.0
    alpha_tilde: float = 0.0
    kappa: float = 0.0
    potential: Potential = field(default_factory=Potential.none)
    box: tuple = None
    T0: float = None

    def __post_init__(self):
        object.__setattr__(self, "box", _box(self.box or self.field.domain, self.field.domain))
        if self.T0 is None:
            object.__setattr__(self, "T0", float(self.field.T0))
        if not (self.mass > 0 and self.eta > 0 and self.T0 > 0):
            raise ParameterError("mass, eta and T0 must be positive")
        probe = np.linspace(*self.box, 4097)
        eff = self.eta_eff(probe)
        if np.any(eff <= 0):
            bad = probe[np.argmin(eff)]
            raise ModelValidityError(
                f"eta_eff = eta (1 - alpha_tilde T'') is not positive at x={bad:.4g}")

    @property
    def half_width(self):
        return 0.5 * (self.box[1] - self.box[0])

    def eta_eff(self, x):
        return self.eta * (1.0 - self.alpha_tilde * np.asarray(self.field.curv(x)))

    def force(self, x):
        """Deterministic force -V'(x) - kappa T'(x)."""
        return -self.potential.dV(x) - self.kappa * np.asarray(self.field.grad(x))

    def drift(self, x):
        return self.force(x) / self.eta_eff(x)

    def diffusion(self, x):
        return self.eta * self.T0 / self.eta_eff(x) ** 2

    def relaxation_time(self):
        return self.mass / float(np.min(self.eta_eff(np.linspace(*self.box, 257))))


_II_CACHE = {}


def _eff_tables_two(weight, fld, eta, lo, hi, n):
    """eta_eff and D_eff on n points of [lo, hi] by vector-valued adaptive quadrature."""
    key = None
    if fld.kind != "tabulated" and weight.kind != "tabulated":
        key = (repr(weight), repr(fld), eta, lo, hi, n)
        if key in _II_CACHE:
            return _II_CACHE[key]
    xs = np.linspace(lo, hi, n)
    s = weight.support()
    pts = [0.0] if weight.kind == "gaussian" else None

    def F2(u):
        return (weight.g(u) + xs * weight.dg(u)) ** 2

    def F2T(u):
        return F2(u) * fld.eval(weight.wrap(xs - u))

    opts = dict(epsabs=1e-13, epsrel=1e-10, points=pts, limit=400)
    eta_eff = eta / weight.box_length * integrate.quad_vec(F2, -s, s, **opts)[0]
    d_eff = eta / weight.box_length * integrate.quad_vec(F2T, -s, s, **opts)[0]
    out = (xs, eta_eff, d_eff)
    if key is not None:
        _II_CACHE[key] = out
    return out


@dataclass(frozen=True)
class EffectiveParamsII:
    """Overdamped dynamics of the spatially distributed bath.

    ``approximation``:
      * ``full``: D = D_eff(x)/eta_eff(x)^2, drift -V'/eta_eff(x);
      * ``local``: D_eff replaced by eta_eff(x) T(x), so D = T/eta_eff;
      * ``local_flat``: additionally eta_eff frozen at its value at x = 0.
    """

    weight: WeightFunction
    field: object
    eta: float = 1.0
    potential: Potential = field(default_factory=Potential.none)
    box: tuple = None
    approximation: str = "full"
    table_points: int = TABLE_POINTS
    _tables: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.approximation not in APPROXIMATIONS:
            raise ParameterError(f"approximation must be one of {APPROXIMATIONS}")
        if not self.eta > 0:
            raise ParameterError("eta must be positive")
        half = 0.5 * self.weight.box_length
        object.__setattr__(self, "box", _box(self.box or (-half, half), self.field.domain))
        lo, hi = self.box
        xs, eta_eff, d_eff = _eff_tables_two(self.weight, self.field, self.eta, lo, hi,
                                             self.table_points)
        if np.any(eta_eff <= 0):
            raise ModelValidityError("eta_eff vanishes inside the box; widen the weight function")
        object.__setattr__(self, "_tables", (
            CubicTable.from_function(lambda x: np.interp(x, xs, eta_eff), lo, hi, self.table_points),
            CubicTable.from_function(lambda x: np.interp(x, xs, d_eff), lo, hi, self.table_points),
        ))

    @property
    def half_width(self):
        return 0.5 * (self.box[1] - self.box[0])

    @property
    def eta_eff_center(self):
        return float(self._tables[0](0.0)) if self.box[0] <= 0 <= self.box[1] else float(
            self._tables[0](0.5 * sum(self.box)))

    def eta_eff(self, x):
        if self.approximation == "local_flat":
            return np.full(np.shape(x), self.eta_eff_center)[()]
        return self._tables[0](x)

    def d_eff(self, x):
        if self.approximation == "full":
            return self._tables[1](x)
        return self.eta_eff(x) * np.asarray(self.field.eval(x))

    def drift(self, x):
        return -self.potential.dV(x) / self.eta_eff(x)

    def diffusion(self, x):
        return self.d_eff(x) / self.eta_eff(x) ** 2

    def relaxation_time(self):
        return 0.0


def fpe_coefficients(params):
    """(drift, diffusion) callables for the Fokker-Planck solver."""
    return params.drift, params.diffusion


# -- compiled kernels -----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _overdamped_chunk(x, noise, dt, half, a_lo, a_dx, a_coef, b_lo, b_dx, b_coef,
                      step0, rec_steps, rec_pos, rec_out):
    """Euler-Maruyama with folding; returns (bad trajectory or -1, next record)."""
    n = x.shape[0]
    sq = math.sqrt(dt)
    r = rec_pos
    for s in range(noise.shape[0]):
        for i in range(n):
            xi = x[i]
            xi += table_eval(a_lo, a_dx, a_coef, xi) * dt + \
                table_eval(b_lo, b_dx, b_coef, xi) * sq * noise[s, i]
            xi, _ = fold_into_box(xi, half)
            if not np.isfinite(xi):
                return i, r
            x[i] = xi
        if r < rec_steps.shape[0] and rec_steps[r] == step0 + s + 1:
            for i in range(n):
                rec_out[i, r] = x[i]
            r += 1
    return -1, r


@numba.njit(cache=True, nogil=True)
def _baoab_chunk(x, v, noise, dt, half, M, f_lo, f_dx, f_coef, e_lo, e_dx, e_coef, eta_t0,
                 step0, rec_steps, rec_pos, rec_x, rec_v):
    """BAOAB splitting; the O part is the exact Ornstein-Uhlenbeck update with
    friction eta_eff(x) frozen over the step and noise strength 2 eta T0."""
    n = x.shape[0]
    h = 0.5 * dt
    r = rec_pos
    for s in range(noise.shape[0]):
        for i in range(n):
            xi = x[i]
            vi = v[i] + h * table_eval(f_lo, f_dx, f_coef, xi) / M
            xi += h * vi
            xi, flips = fold_into_box(xi, half)
            if flips % 2 == 1:
                vi = -vi
            ee = table_eval(e_lo, e_dx, e_coef, xi)
            c1 = math.exp(-ee * dt / M)
            vi = c1 * vi + math.sqrt(eta_t0 / (M * ee) * (1.0 - c1 * c1)) * noise[s, i]
            xi += h * vi
            xi, flips = fold_into_box(xi, half)
            if flips % 2 == 1:
                vi = -vi
            vi += h * table_eval(f_lo, f_dx, f_coef, xi) / M
            if not (np.isfinite(xi) and np.isfinite(vi)):
                return i, r
            x[i] = xi
            v[i] = vi
        if r < rec_steps.shape[0] and rec_steps[r] == step0 + s + 1:
            for i in range(n):
                rec_x[i, r] = x[i]
                rec_v[i, r] = v[i]
            r += 1
    return -1, r


@dataclass(frozen=True)
class _Dynamics:
    model: str
    half: float
    center: float
    tables: tuple
    mass: float = 1.0
    eta_t0: float = 0.0


def _dynamics(model, params):
    if model not in MODELS:
        raise ParameterError(f"unknown model {model!r}; choose from {MODELS}")
    if model == "overdamped2" and not isinstance(params, EffectiveParamsII):
        raise ParameterError("overdamped2 needs EffectiveParamsII")
    if model != "overdamped2" and not isinstance(params, EffectiveParamsI):
        raise ParameterError(f"{model} needs EffectiveParamsI")
    lo, hi = params.box
    center = 0.5 * (lo + hi)
    # tables live in box-centred coordinates so folding is about 0
    def shifted(f):
        return CubicTable.from_function(lambda u: f(np.clip(u + center, lo, hi)),
                                        lo - center, hi - center, TABLE_POINTS)

    if model == "underdamped1":
        tables = (shifted(params.force), shifted(params.eta_eff))
        return _Dynamics(model, 0.5 * (hi - lo), center, tables, params.mass,
                         params.eta * params.T0)
    tables = (shifted(params.drift), shifted(lambda x: np.sqrt(2.0 * params.diffusion(x))))
    return _Dynamics(model, 0.5 * (hi - lo), center, tables)


def _check_dt(model, params, dt):
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if model == "underdamped1":
        lo, hi = params.box
        eff_max = float(np.max(params.eta_eff(np.linspace(lo, hi, 1025))))
        if dt * eff_max / params.mass >= 0.1:
            raise ParameterError(f"dt eta_eff/M = {dt * eff_max / params.mass:.3g} must be < 0.1")
        k = params.potential.max_curvature(lo, hi)
        if k > 0 and dt * math.sqrt(k / params.mass) >= 0.1:
            raise ParameterError("dt w0 must be < 0.1 for the trap")


def _advance(dyn, x, v, noise, dt, step0, rec_steps, rec_pos, rec_x, rec_v):
    if dyn.model == "underdamped1":
        return _baoab_chunk(x, v, noise, dt, dyn.half, dyn.mass, *dyn.tables[0].args(),
                            *dyn.tables[1].args(), dyn.eta_t0, step0, rec_steps, rec_pos,
                            rec_x, rec_v)
    return _overdamped_chunk(x, noise, dt, dyn.half, *dyn.tables[0].args(),
                             *dyn.tables[1].args(), step0, rec_steps, rec_pos, rec_x)


def _single_step(model, params, x, v, dt, noise):
    _check_dt(model, params, dt)
    dyn = _dynamics(model, params)
    x = np.array(x, dtype=float, ndmin=1) - dyn.center
    v = np.zeros_like(x) if v is None else np.array(v, dtype=float, ndmin=1)
    noise = np.asarray(noise, dtype=float).reshape(1, -1)
    if noise.shape[1] != x.size:
        raise ParameterError("one noise draw per particle required")
    empty = np.zeros((x.size, 0))
    bad, _ = _advance(dyn, x, v, noise, dt, 0, np.zeros(0, dtype=np.int64), 0, empty, empty)
    if bad >= 0:
        raise CorruptedStateError(f"non-finite state for particle {bad}", step=1, unit=int(bad))
    return x + dyn.center, v


def step_overdamped_I(x, params, dt, noise):
    """One Euler-Maruyama step of the overdamped model-I SDE; ``noise`` ~ N(0, 1) per particle."""
    return _single_step("overdamped1", params, x, None, dt, noise)[0]


def step_overdamped_II(x, params, dt, noise):
    """One Euler-Maruyama step of the overdamped model-II SDE."""
    return _single_step("overdamped2", params, x, None, dt, noise)[0]


def step_underdamped_I(x, v, params, dt, noise):
    """One BAOAB step of the underdamped model-I dynamics; returns (x, v)."""
    return _single_step("underdamped1", params, x, v, dt, noise)


# -- ensembles ------------------------------------------------------------------

@dataclass
class TrajectoryEnsemble:
    model: str
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    seed: int
    box: tuple
    relaxation_time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self):
        return self.x.shape[0]


def _initial_positions(spec, n, rng, box):
    lo, hi = box
    if isinstance(spec, str):
        if spec != "uniform":
            raise ParameterError(f"unknown initial condition {spec!r}")
        return rng.uniform(lo, hi, n)
    if isinstance(spec, tuple) and spec and spec[0] == "gaussian":
        _, x0, s = spec
        out = np.empty(0)
        while out.size < n:
            draw = rng.normal(x0, s, 2 * (n - out.size) + 16)
            out = np.concatenate((out, draw[(draw >= lo) & (draw <= hi)]))
        return out[:n]
    x0 = float(spec)
    if not lo <= x0 <= hi:
        raise ParameterError(f"x0={x0} outside the box {box}")
    return np.full(n, x0)


def record_steps(n_steps, n_records):
    """Distinct step indices 0..n_steps at which positions are stored."""
    n_records = max(2, int(n_records))
    return np.unique(np.round(np.linspace(0, n_steps, min(n_records, n_steps + 1))).astype(np.int64))


def run_ensemble(model, params, n_traj, dt, t_final, seed, x0="uniform", n_records=101,
                 threads=1, block_size=BLOCK_SIZE):
    """Simulate ``n_traj`` independent trajectories with reflecting walls.

    Trajectories are processed in fixed blocks of ``block_size``; block b
    draws its initial state and noise from streams keyed by (seed, b), so
    the output is identical for any thread count. ``x0`` is ``"uniform"``,
    a number, or ``("gaussian", mean, std)`` (truncated to the box).
    Underdamped velocities start Maxwellian at T0.
    """
    if n_traj < 1:
        raise ParameterError("n_traj must be >= 1")
    if t_final < 0:
        raise ParameterError("t_final must be >= 0")
    _check_dt(model, params, dt)
    dyn = _dynamics(model, params)
    n_steps = int(round(t_final / dt))
    if n_steps and not math.isclose(n_steps * dt, t_final, rel_tol=1e-9, abs_tol=1e-12):
        raise ParameterError("t_final must be a whole number of steps")
    rec = record_steps(n_steps, n_records) if n_steps else np.zeros(1, dtype=np.int64)
    times = rec * dt
    underdamped = model == "underdamped1"

    def run_block(b):
        lo_i = b * block_size
        n = min(block_size, n_traj - lo_i)
        init = parallel.stream(seed, parallel.LANGEVIN_INIT, b)
        x = _initial_positions(x0, n, init, params.box) - dyn.center
        v = (init.standard_normal(n) * math.sqrt(params.T0 / params.mass)
             if underdamped else np.zeros(n))
        rx = np.empty((n, rec.size))
        rv = np.empty((n, rec.size)) if underdamped else rx
        rx[:, 0] = x
        if underdamped:
            rv[:, 0] = v
        rng = parallel.stream(seed, parallel.LANGEVIN_BLOCK, b)
        r = 1
        for s0 in range(0, n_steps, CHUNK_STEPS):
            m = min(CHUNK_STEPS, n_steps - s0)
            noise = rng.standard_normal((m, n))
            bad, r = _advance(dyn, x, v, noise, dt, s0, rec, r, rx, rv)
            if bad >= 0:
                tid = lo_i + bad
                raise CorruptedStateError(f"trajectory {tid} became non-finite near step {s0}",
                                          step=s0, unit=tid)
        rx += dyn.center
        return rx, (rv if underdamped else None)

    n_blocks = (n_traj + block_size - 1) // block_size
    parts = parallel.map_ordered(run_block, range(n_blocks), threads)
    xs = np.vstack([p[0] for p in parts])
    vs = np.vstack([p[1] for p in parts]) if underdamped else None
    relax = params.relaxation_time() if underdamped else 0.0
    return TrajectoryEnsemble(model, times, xs, vs, int(seed), tuple(params.box), relax,
                              {"dt": dt, "n_steps": n_steps, "x0": x0})
