"""Imposed temperature profiles T(x) and the pressure-model parameters.

Units: k_B = 1 throughout, so every temperature is an energy.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, ParameterError

PROFILE_KINDS = ("constant", "linear", "exponential", "tabulated")


@dataclass(frozen=True)
class TemperatureField:
    """A positive temperature profile on a bounded 1-D domain.

    Build instances through the ``constant``, ``linear``, ``exponential`` and
    ``tabulated`` constructors. Closed-form profiles are anchored at the
    reference point ``x0`` where ``T(x0) = T0``:

    * linear:       T(x) = T0 + slope * (x - x0)
    * exponential:  T(x) = T0 * exp(-(x - x0) / decay_length)

    Tabulated profiles use monotone (PCHIP) cubic interpolation, which cannot
    undershoot below the smallest sample.
    """

    kind: str
    T0: float
    domain: tuple
    x0: float = 0.0
    slope: float = 0.0
    decay_length: float = math.inf
    table: tuple = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ParameterError(f"unknown profile kind {self.kind!r}")
        lo, hi = map(float, self.domain)
        if not lo < hi:
            raise ParameterError(f"empty domain [{lo}, {hi}]")
        object.__setattr__(self, "domain", (lo, hi))
        if self.kind == "exponential" and not self.decay_length > 0:
            raise ParameterError("decay_length must be positive")
        if self.kind == "tabulated":
            xs, ts = (np.asarray(a, dtype=float) for a in self.table)
            if xs.ndim != 1 or xs.shape != ts.shape or xs.size < 2:
                raise ParameterError("table needs matching 1-D x and T columns, at least 2 rows")
            if np.any(np.diff(xs) <= 0):
                raise ParameterError("table x values must be strictly increasing")
            if xs[0] > lo or xs[-1] < hi:
                raise ParameterError("table does not cover the domain")
            object.__setattr__(self, "table", (xs, ts))
            object.__setattr__(self, "_interp", PchipInterpolator(xs, ts, extrapolate=False))
        self._check_positive()

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, T0, domain):
        return cls("constant", float(T0), tuple(domain))

    @classmethod
    def linear(cls, T0, slope, domain, x0=0.0):
        return cls("linear", float(T0), tuple(domain), x0=float(x0), slope=float(slope))

    @classmethod
    def exponential(cls, T0, decay_length, domain, x0=0.0):
        return cls("exponential", float(T0), tuple(domain), x0=float(x0),
                   decay_length=float(decay_length))

    @classmethod
    def tabulated(cls, x, T, domain=None, x0=0.0):
        x = np.asarray(x, dtype=float)
        T = np.asarray(T, dtype=float)
        if domain is None:
            domain = (x[0], x[-1])
        T0 = float(PchipInterpolator(x, T)(x0)) if x[0] <= x0 <= x[-1] else float(T[0])
        return cls("tabulated", T0, tuple(domain), x0=float(x0), table=(x, T))

    @classmethod
    def from_csv(cls, path, domain=None, x0=0.0):
        """Read a two-column (x, T) CSV; a non-numeric first row is a header."""
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise ParameterError(f"bad row in {path}: {row}") from None
        data = np.array(rows)
        return cls.tabulated(data[:, 0], data[:, 1], domain=domain, x0=x0)

    # -- evaluation ---------------------------------------------------------

    @property
    def width(self):
        return self.domain[1] - self.domain[0]

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.domain[0]) & (x <= self.domain[1])

    def _checked(self, x):
        arr = np.asarray(x, dtype=float)
        if not np.all(self.contains(arr)):
            bad = arr[~self.contains(arr)]
            raise DomainError(f"x={bad.flat[0]!r} outside temperature domain {self.domain}")
        return arr

    def eval(self, x):
        """Temperature at ``x`` (scalar or array)."""
        x = self._checked(x)
        if self.kind == "constant":
            out = np.full(x.shape, self.T0)
        elif self.kind == "linear":
            out = self.T0 + self.slope * (x - self.x0)
        elif self.kind == "exponential":
            out = self.T0 * np.exp(-(x - self.x0) / self.decay_length)
        else:
            out = self._interp(x)
        return out[()] if out.ndim == 0 else out

    def grad(self, x):
        """dT/dx at ``x``."""
        x = self._checked(x)
        if self.kind == "constant":
            out = np.zeros(x.shape)
        elif self.kind == "linear":
            out = np.full(x.shape, self.slope)
        elif self.kind == "exponential":
            out = -self.T0 * np.exp(-(x - self.x0) / self.decay_length) / self.decay_length
        else:
            out = self._interp(x, 1)
        return out[()] if out.ndim == 0 else out

    def curv(self, x):
        """d^2T/dx^2 at ``x``."""
        x = self._checked(x)
        if self.kind in ("constant", "linear"):
            out = np.zeros(x.shape)
        elif self.kind == "exponential":
            out = self.T0 * np.exp(-(x - self.x0) / self.decay_length) / self.decay_length**2
        else:
            out = self._interp(x, 2)
        return out[()] if out.ndim == 0 else out

    @property
    def has_constant_gradient(self):
        return self.kind in ("constant", "linear")

    def _check_positive(self):
        lo, hi = self.domain
        if self.kind == "linear":
            # A linear profile may touch zero exactly at a domain endpoint.
            ends = self.T0 + self.slope * (np.array([lo, hi]) - self.x0)
            mid = self.T0 + self.slope * ((lo + hi) / 2 - self.x0)
            if np.any(ends < 0) or mid <= 0:
                raise ParameterError(f"linear profile is not positive on {self.domain}")
            return
        if self.kind in ("constant", "exponential"):
            if not self.T0 > 0:
                raise ParameterError("T0 must be positive")
            return
        probe = np.linspace(lo, hi, 20001)
        if np.any(self._interp(probe) <= 0):
            raise ParameterError("tabulated profile is not positive on its domain")


@dataclass(frozen=True)
class PressureModel:
    """Phenomenological pressure model behind the thermophoretic force.

    ``volume`` may be omitted when both ``half_size`` and ``cross_section``
    are given, in which case V = 2 r A.
    """

    pressure: float
    volume: float = None
    cross_section: float = None
    half_size: float = None

    def __post_init__(self):
        r, A = self.half_size, self.cross_section
        if r is not None and A is not None:
            implied = 2.0 * r * A
            if self.volume is None:
                object.__setattr__(self, "volume", implied)
            elif not math.isclose(self.volume, implied, rel_tol=1e-12):
                raise ParameterError(f"volume {self.volume} != 2 r A = {implied}")
        if self.volume is None:
            raise ParameterError("volume, or half_size and cross_section, required")
        if not (self.pressure > 0 and self.volume > 0):
            raise ParameterError("pressure and volume must be positive")


def kappa_from_pressure(pm, T):
    """Thermophoretic coefficient kappa = p V / (2 T)."""
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    return pm.pressure * pm.volume / (2.0 * T)


def alpha_tilde_from_correlation_time(kappa, tau_R, eta):
    """Bath drive strength from the correlation-time argument:
    alpha_tilde = (tau_R / (pi eta)) * kappa.

    This mapping presumes sum_k c_k^2/(m_k w_k^2) = pi eta / tau_R. For an
    exponential cutoff that sum is 2 eta / (pi tau_R), so the resulting
    kappa is 2/pi^2 of the requested one; use
    ``spectral.alpha_tilde_for_kappa`` for an exact closure on a given bath.
    """
    if not (tau_R > 0 and eta > 0):
        raise ParameterError("tau_R and eta must be positive")
    return tau_R * kappa / (math.pi * eta)
