"""Spectral densities, the friction memory kernel and bath discretization.

The kernel is the cosine transform

    K(tau) = (2/pi) * int_0^inf dw J(w)/w cos(w tau)

of the spectral density J(w) = eta_s w^s exp(-w/w_c). For the ohmic case
(s = 1) it is the Lorentzian (2 eta/pi) w_c / (1 + w_c^2 tau^2), which
integrates to eta over tau > 0 for any cutoff.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NumericalError, ParameterError

FAMILIES = ("ohmic", "power-law")
QUAD_EPSABS = 1e-10


@dataclass(frozen=True)
class SpectralModel:
    """J(w) = eta * w**exponent * exp(-w/cutoff); ``cutoff=inf`` drops the exponential."""

    family: str = "ohmic"
    eta: float = 1.0
    exponent: float = 1.0
    cutoff: float = math.inf

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown spectral family {self.family!r}")
        if self.family == "ohmic" and self.exponent != 1.0:
            raise ParameterError("ohmic family requires exponent 1")
        if not (self.eta > 0 and self.cutoff > 0 and self.exponent > 0):
            raise ParameterError("eta, cutoff and exponent must be positive")

    @property
    def tau_R(self):
        """Bath correlation time 1/w_c."""
        return 1.0 / self.cutoff

    def J(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = self.eta * omega**self.exponent
        if math.isfinite(self.cutoff):
            out = out * np.exp(-omega / self.cutoff)
        return out

    def _require_cutoff(self):
        if not math.isfinite(self.cutoff):
            raise ParameterError("kernel needs a finite cutoff (the ohmic limit is 2 eta delta(tau))")


def kernel_quad(model, tau):
    """K(tau) by adaptive quadrature; the cosine weight makes large tau safe."""
    model._require_cutoff()
    tau = abs(float(tau))
    s = model.exponent
    upper = (50.0 + 2.0 * s) * model.cutoff

    def integrand(w):
        return model.eta * w ** (s - 1.0) * math.exp(-w / model.cutoff)

    kwargs = dict(epsabs=QUAD_EPSABS, epsrel=1e-12, limit=2000, full_output=1)

    def run(*args, **kw):
        res = integrate.quad(*args, **kwargs, **kw)
        if len(res) > 3:
            raise NumericalError(
                f"kernel quadrature did not converge at tau={tau}: {res[3]} (abserr={res[1]:.3g})"
            )
        return res[0]

    split = 0.0
    value = 0.0
    if s < 1.0:
        # w^(s-1) is integrable but singular: peel it off as an algebraic weight
        split = upper if tau == 0.0 else min(upper, 1.0 / tau)
        value += run(lambda w: model.eta * math.exp(-w / model.cutoff) * math.cos(w * tau),
                     0.0, split, weight="alg", wvar=(s - 1.0, 0.0))
    if split < upper:
        if tau == 0.0:
            value += run(integrand, split, upper)
        else:
            value += run(integrand, split, upper, weight="cos", wvar=tau)
    return 2.0 / math.pi * value


def kernel_ohmic(eta, cutoff, tau):
    """Closed form of K(tau) for J = eta w exp(-w/w_c)."""
    tau = np.asarray(tau, dtype=float)
    return 2.0 * eta / math.pi * cutoff / (1.0 + (cutoff * tau) ** 2)


def kernel(model, tau):
    """Memory kernel K(tau), even in tau; accepts scalars or arrays."""
    model._require_cutoff()
    if model.family == "ohmic":
        out = kernel_ohmic(model.eta, model.cutoff, tau)
        return out[()] if np.ndim(out) == 0 else out
    tau_arr = np.asarray(tau, dtype=float)
    out = np.vectorize(lambda t: kernel_quad(model, t), otypes=[float])(tau_arr)
    return out[()] if out.ndim == 0 else out


def kernel_integral(model):
    """int_0^inf K(tau) dtau (equals eta for the ohmic family)."""
    model._require_cutoff()
    value, abserr = integrate.quad(lambda t: float(kernel(model, t)), 0.0, math.inf,
                                   epsabs=1e-13, epsrel=1e-12, limit=500)
    return value


@dataclass(frozen=True)
class DiscreteBathSpec:
    """A finite set of oscillators {w_k, c_k, m_k} standing in for a continuum."""

    omega: np.ndarray
    c: np.ndarray
    m: np.ndarray
    delta_omega: float = float("nan")

    def __post_init__(self):
        omega, c, m = (np.ascontiguousarray(a, dtype=float) for a in (self.omega, self.c, self.m))
        if omega.ndim != 1 or omega.size < 1 or c.shape != omega.shape or m.shape != omega.shape:
            raise ParameterError("omega, c, m must be equal-length 1-D arrays with N >= 1")
        if np.any(omega <= 0) or np.any(m <= 0):
            raise ParameterError("oscillator frequencies and masses must be positive")
        for name, arr in (("omega", omega), ("c", c), ("m", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def count(self):
        return self.omega.size

    @property
    def stiffness(self):
        """c_k^2 / (m_k w_k^2) per oscillator."""
        return self.c**2 / (self.m * self.omega**2)

    @property
    def coupling_sum(self):
        """sum_k c_k^2 / (m_k w_k^2), the discrete K(0)."""
        return float(np.sum(self.stiffness))

    @property
    def recurrence_time(self):
        """2 pi / dw; finite-N baths re-phase after this time."""
        return 2.0 * math.pi / self.delta_omega

    def correlation(self, tau):
        """sum_k c_k^2/(m_k w_k^2) cos(w_k tau), the discrete counterpart of K."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.cos(np.outer(tau, self.omega)) @ self.stiffness
        return out

    def reconstructed_J(self):
        """(pi/2) c_k^2 / (m_k w_k dw), which reproduces J on the grid."""
        return 0.5 * math.pi * self.c**2 / (self.m * self.omega * self.delta_omega)


def default_omega_max(model):
    model._require_cutoff()
    return 50.0 * model.cutoff


def discretize(model, n, omega_max=None):
    """Midpoint frequency grid w_k = (k - 1/2) dw with unit masses and
    c_k = sqrt((2/pi) m_k w_k J(w_k) dw)."""
    n = int(n)
    if n < 1:
        raise ParameterError("need at least one oscillator")
    if omega_max is None:
        omega_max = default_omega_max(model)
    if not omega_max > 0:
        raise ParameterError("omega_max must be positive")
    dw = omega_max / n
    omega = (np.arange(n) + 0.5) * dw
    m = np.ones(n)
    c = np.sqrt(2.0 / math.pi * m * omega * model.J(omega) * dw)
    return DiscreteBathSpec(omega, c, m, delta_omega=dw)


def kappa_from_bath(spec, alpha_tilde):
    """kappa = alpha_tilde * sum_k c_k^2 / (m_k w_k^2)."""
    return alpha_tilde * spec.coupling_sum


def alpha_tilde_for_kappa(spec, kappa):
    """Drive strength that makes ``kappa_from_bath`` return ``kappa`` exactly."""
    return kappa / spec.coupling_sum
