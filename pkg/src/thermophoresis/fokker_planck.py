"""One-dimensional Fokker-Planck evolution and zero-flux steady states.

Equations are taken in the form

    dP/dt = -d/dx [ a(x) P - d/dx (D(x) P) ]

with the full diffusion inside the second derivative (the Ito form), on a
box with reflecting (zero-flux) walls. ``a`` is the drift velocity and
``D`` the diffusion coefficient of the corresponding Ito SDE.
"""

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ModelValidityError, ParameterError

SCHEMES = ("upwind", "exponential")
MAX_DIFFUSION_NUMBER = 0.4
MAX_COURANT = 0.2


@dataclass(frozen=True)
class DensityProfile:
    """Normalized density on uniform cells over ``[lo, hi]``; ``x`` are cell centres."""

    lo: float
    hi: float
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = np.array(self.values, dtype=float)
        if P.ndim != 1 or P.size < 2:
            raise ParameterError("a density needs at least two cells")
        if not self.hi > self.lo:
            raise ParameterError("empty grid")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ParameterError("density values must be finite and non-negative")
        mass = P.sum() * (self.hi - self.lo) / P.size
        if not mass > 0:
            raise ParameterError("density has zero mass")
        P /= mass
        P.setflags(write=False)
        object.__setattr__(self, "values", P)

    @classmethod
    def from_function(cls, func, lo, hi, n, meta=None):
        x = cell_centers(lo, hi, n)
        return cls(float(lo), float(hi), np.asarray(func(x), dtype=float) * np.ones(n), meta or {})

    @classmethod
    def uniform(cls, lo, hi, n):
        return cls(float(lo), float(hi), np.ones(n), {"initial": "uniform"})

    @classmethod
    def gaussian(cls, lo, hi, n, x0, s):
        """Gaussian cell averages (exact via erf), renormalized on the box."""
        edges = np.linspace(lo, hi, n + 1)
        from scipy.special import erf
        cdf = 0.5 * (1.0 + erf((edges - x0) / (math.sqrt(2.0) * s)))
        return cls(float(lo), float(hi), np.diff(cdf), {"initial": f"gaussian({x0}, {s})"})

    @property
    def n(self):
        return self.values.size

    @property
    def dx(self):
        return (self.hi - self.lo) / self.n

    @property
    def x(self):
        return cell_centers(self.lo, self.hi, self.n)

    @property
    def edges(self):
        return np.linspace(self.lo, self.hi, self.n + 1)

    def mass(self):
        return float(self.values.sum() * self.dx)

    def same_grid(self, other):
        return (self.n == other.n and math.isclose(self.lo, other.lo, abs_tol=1e-12)
                and math.isclose(self.hi, other.hi, abs_tol=1e-12))


def cell_centers(lo, hi, n):
    dx = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * dx


def _at(coef, x):
    if callable(coef):
        out = np.asarray(coef(x), dtype=float)
        return np.broadcast_to(out, np.shape(x)).astype(float)
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(np.shape(x), float(arr))
    if arr.shape != np.shape(x):
        raise ParameterError("tabulated coefficient does not match the grid")
    return arr


def _bernoulli(z):
    """B(z) = z / (exp(z) - 1), with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    small = np.abs(z) < 1e-8
    zz = z[~small]
    out[~small] = zz / np.expm1(zz)
    out[small] = 1.0 - 0.5 * z[small]
    return out


@dataclass(frozen=True)
class _Operator:
    """Face weights so that flux_{j+1/2} = wl_j * P_j - wr_j * P_{j+1}."""

    wl: np.ndarray
    wr: np.ndarray
    diff_max: float
    courant_max: float


def _operator(drift, diffusion, lo, hi, n, scheme):
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    dx = (hi - lo) / n
    xc = cell_centers(lo, hi, n)
    D = _at(diffusion, xc)
    if np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise ParameterError("diffusion must be positive and finite on the grid")
    if scheme == "upwind":
        faces = lo + dx * np.arange(1, n)
        a = _at(drift, faces) if callable(drift) else 0.5 * (_at(drift, xc)[1:] + _at(drift, xc)[:-1])
        wl = np.maximum(a, 0.0) + D[:-1] / dx
        wr = -np.minimum(a, 0.0) + D[1:] / dx
        courant = float(np.max(np.abs(a))) / dx if a.size else 0.0
    else:
        z = _face_peclet(drift, D, xc, dx)
        wl = _bernoulli(-z) * D[:-1] / dx
        wr = _bernoulli(z) * D[1:] / dx
        courant = 0.0
    return _Operator(wl, wr, float(np.max(D)) / dx**2, courant)


def _face_peclet(drift, D, xc, dx):
    ratio = _at(drift, xc) / D
    return 0.5 * dx * (ratio[1:] + ratio[:-1])


def stable_dt(drift, diffusion, lo, hi, n, scheme="upwind"):
    """Largest dt satisfying the diffusion-number and Courant limits."""
    op = _operator(drift, diffusion, lo, hi, n, scheme)
    limits = [MAX_DIFFUSION_NUMBER / op.diff_max]
    if op.courant_max > 0:
        limits.append(MAX_COURANT / op.courant_max)
    return min(limits)


@numba.njit(cache=True)
def _march(P, wl, wr, r, n_steps):
    n = P.shape[0]
    F = np.zeros(n + 1)
    for _ in range(n_steps):
        for j in range(n - 1):
            F[j + 1] = wl[j] * P[j] - wr[j] * P[j + 1]
        for j in range(n):
            P[j] -= r * (F[j + 1] - F[j])
    return P


def evolve(drift, diffusion, P0, dt, t_final, scheme="upwind"):
    """Explicit conservative finite-volume evolution with zero-flux walls.

    ``drift`` and ``diffusion`` are vectorized callables of x or arrays of
    cell-centre values. The step count is ceil(t_final/dt) with dt shrunk
    to land exactly on ``t_final``. The returned profile's ``meta`` records
    the accumulated mass error before renormalization. Raises ParameterError when dt breaks
    dt <= 0.4 dx^2/max D or (upwind) max|a| dt/dx <= 0.2.
    """
    if t_final < 0 or not dt > 0:
        raise ParameterError("need dt > 0 and t_final >= 0")
    op = _operator(drift, diffusion, P0.lo, P0.hi, P0.n, scheme)
    if dt * op.diff_max > MAX_DIFFUSION_NUMBER * (1 + 1e-12):
        raise ParameterError(
            f"dt={dt:.4g} violates dt <= {MAX_DIFFUSION_NUMBER} dx^2/max(D) = "
            f"{MAX_DIFFUSION_NUMBER / op.diff_max:.4g}")
    if op.courant_max > 0 and dt * op.courant_max > MAX_COURANT * (1 + 1e-12):
        raise ParameterError(
            f"dt={dt:.4g} violates max|a| dt/dx <= {MAX_COURANT} (limit {MAX_COURANT / op.courant_max:.4g})")
    n_steps = int(math.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    h = t_final / n_steps if n_steps else 0.0
    P = np.array(P0.values, dtype=float)
    P = _march(P, op.wl, op.wr, h / P0.dx, n_steps)
    if np.any(P < -1e-14):
        raise ParameterError("negative density produced; reduce dt")
    mass_error = abs(P.sum() * P0.dx - P0.mass())
    meta = dict(P0.meta, t=float(t_final), steps=n_steps, scheme=scheme, mass_error=mass_error)
    return DensityProfile(P0.lo, P0.hi, np.maximum(P, 0.0), meta)


def flux(drift, diffusion, profile, scheme="upwind"):
    """Face positions (including the walls) and discrete probability fluxes."""
    op = _operator(drift, diffusion, profile.lo, profile.hi, profile.n, scheme)
    P = profile.values
    F = np.zeros(profile.n + 1)
    F[1:-1] = op.wl * P[:-1] - op.wr * P[1:]
    return profile.edges, F


def zero_flux_residual(drift, diffusion, profile):
    """max |flux| with the exponentially fitted face flux.

    That flux vanishes exactly on the trapezoid steady state, so the
    residual measures how far ``profile`` is from stationarity.
    """
    _, F = flux(drift, diffusion, profile, scheme="exponential")
    return float(np.max(np.abs(F)))


def steady_state_numeric(drift, diffusion, lo, hi, n):
    """P proportional to exp(int a/D) / D by cumulative trapezoid, anchored at the midpoint."""
    x = cell_centers(lo, hi, n)
    D = _at(diffusion, x)
    if np.any(D <= 0) or not np.all(np.isfinite(D)):
        raise ParameterError("diffusion must be positive on the grid")
    ratio = _at(drift, x) / D
    dx = (hi - lo) / n
    phi = np.concatenate(([0.0], np.cumsum(0.5 * dx * (ratio[1:] + ratio[:-1]))))
    phi -= phi[n // 2]
    logp = phi - np.log(D)
    P = np.exp(logp - logp.max())
    return DensityProfile(float(lo), float(hi), P, {"kind": "steady_numeric"})


def steady_state_I(params, lo=None, hi=None, n=512):
    """Closed-form zero-flux density for a free particle in a constant gradient.

    P(x) = exp(-kappa T' x / T0) / A with A = (2 T0/(kappa T')) sinh(kappa T' L/(2 T0))
    on a box centred at 0; evaluated at cell centres and renormalized there.
    """
    fld = params.field
    if not fld.has_constant_gradient:
        raise ModelValidityError(
            "closed-form steady state needs a constant gradient; use steady_state_numeric")
    if params.potential.kind != "none":
        raise ModelValidityError("closed-form steady state is for a free particle")
    lo = params.box[0] if lo is None else lo
    hi = params.box[1] if hi is None else hi
    x = cell_centers(lo, hi, n)
    b = params.kappa * float(fld.grad(0.5 * (lo + hi))) / params.T0
    L = hi - lo
    A = L if b == 0 else 2.0 / b * math.sinh(0.5 * b * L)
    P = np.exp(-b * (x - 0.5 * (lo + hi))) / A
    return DensityProfile(float(lo), float(hi), P, {"kind": "steady_I", "slope": -b})


def soret_profile(field, x):
    """Free-particle Soret coefficient 1/T(x)."""
    return 1.0 / np.asarray(field.eval(x), dtype=float)
