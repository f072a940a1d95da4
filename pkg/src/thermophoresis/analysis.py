"""Histograms, fits, Soret estimates, autocovariances and density distances."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import AnalysisError, ParameterError
from .fokker_planck import DensityProfile

WALL_BINS_EXCLUDED = 2
POOL_FRACTION = 0.2


@dataclass(frozen=True)
class FitResult:
    estimate: float
    stderr: float
    residual_norm: float
    window: tuple


def histogram_samples(samples, lo, hi, n_bins):
    """Density histogram of raw samples on ``n_bins`` equal bins over [lo, hi]."""
    if n_bins < 8:
        raise ParameterError("need at least 8 bins")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise AnalysisError("empty sample selection")
    counts, _ = np.histogram(samples, bins=n_bins, range=(lo, hi))
    if counts.sum() == 0:
        raise AnalysisError("no samples inside the histogram range")
    return DensityProfile(float(lo), float(hi), counts.astype(float),
                          {"samples": int(counts.sum())})


def pooling_indices(times, relaxation_time=0.0, fraction=POOL_FRACTION):
    """Record indices in the trailing ``fraction`` of the run, spaced by at
    least five relaxation times."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return np.arange(times.size)
    start = times[-1] - fraction * (times[-1] - times[0])
    rec_dt = times[1] - times[0]
    stride = max(1, int(math.ceil(5.0 * relaxation_time / rec_dt - 1e-9)))
    idx = np.nonzero(times >= start - 1e-12 * abs(times[-1]))[0]
    return idx[::-1][::stride][::-1]


def histogram(ensemble, t_select=None, n_bins=64, pool=False, relaxation_time=None):
    """Density of ensemble positions.

    ``t_select`` picks the nearest recorded time (default: last). With
    ``pool=True`` samples from the trailing 20% of the run are pooled,
    subsampled every five relaxation times (default M/eta_eff when the
    ensemble carries it, else every record).
    """
    lo, hi = ensemble.box
    times = np.asarray(ensemble.times)
    if pool:
        tau = relaxation_time if relaxation_time is not None else ensemble.relaxation_time
        idx = pooling_indices(times, tau or 0.0)
    else:
        t = times[-1] if t_select is None else t_select
        if not times[0] - 1e-9 <= t <= times[-1] + 1e-9:
            raise AnalysisError(f"t_select={t} outside recorded times")
        idx = [int(np.argmin(np.abs(times - t)))]
    prof = histogram_samples(ensemble.x[:, idx], lo, hi, n_bins)
    return DensityProfile(prof.lo, prof.hi, prof.values,
                          dict(prof.meta, times=[float(times[i]) for i in (idx[0], idx[-1])]))


def rebin(profile, n_bins):
    """Merge cells of ``profile`` into ``n_bins`` equal bins (cell count must divide)."""
    if profile.n % n_bins:
        raise AnalysisError(f"{profile.n} cells cannot be merged into {n_bins} bins")
    P = profile.values.reshape(n_bins, -1).mean(axis=1)
    return DensityProfile(profile.lo, profile.hi, P, dict(profile.meta))


def _window_mask(x, window, dx, exclude):
    if window is None:
        mask = np.ones(x.size, dtype=bool)
        if exclude:
            mask[:exclude] = False
            mask[-exclude:] = False
        return mask
    lo, hi = window
    return (x >= lo - 1e-12 * dx) & (x <= hi + 1e-12 * dx)


def fit_log_slope(profile, window=None, exclude=WALL_BINS_EXCLUDED):
    """Ordinary least squares of ln P against x.

    Without ``window`` the ``exclude`` cells next to each wall are dropped.
    """
    x = profile.x
    mask = _window_mask(x, window, profile.dx, exclude)
    xs, ps = x[mask], profile.values[mask]
    if xs.size < 3:
        raise AnalysisError("fit window holds fewer than 3 points")
    if np.any(ps <= 0):
        raise AnalysisError("non-positive density inside the fit window",
                            residuals=ps[ps <= 0])
    y = np.log(ps)
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = xs.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    stderr = math.sqrt(s2 / float(np.sum((xs - xs.mean()) ** 2)))
    return FitResult(float(coef[0]), stderr, float(np.linalg.norm(resid)),
                     (float(xs[0]), float(xs[-1])))


@dataclass(frozen=True)
class SoretEstimate:
    x: np.ndarray
    S_hat: np.ndarray
    S_theory: np.ndarray

    @property
    def ratio(self):
        """S_hat * T(x); 1 when the free-particle relation holds."""
        return self.S_hat / self.S_theory

    def mean_ratio(self, window):
        lo, hi = window
        sel = (self.x >= lo) & (self.x <= hi)
        if not np.any(sel):
            raise AnalysisError("empty Soret averaging window")
        return float(np.mean(self.ratio[sel]))


def estimate_soret(profile, field, window=None):
    """S_hat(x) = -(ln P)'/T'(x) by centred differences at interior cells."""
    x = profile.x
    P = profile.values
    if np.any(P <= 0):
        raise AnalysisError("Soret estimate needs a strictly positive density")
    lnP = np.log(P)
    xi = x[1:-1]
    dlnp = (lnP[2:] - lnP[:-2]) / (2.0 * profile.dx)
    if window is not None:
        sel = (xi >= window[0]) & (xi <= window[1])
        xi, dlnp = xi[sel], dlnp[sel]
    grad = np.asarray(field.grad(xi), dtype=float)
    if np.any(grad == 0):
        raise AnalysisError("Soret coefficient undefined where T'(x) = 0")
    return SoretEstimate(xi, -dlnp / grad, 1.0 / np.asarray(field.eval(xi), dtype=float))


def autocovariance(series, max_lag, mean=None):
    """Biased autocovariance C(l) = (1/N) sum_t (f_t - m)(f_{t+l} - m), l = 0..max_lag.

    A 2-D input is a set of independent realizations (rows); their
    covariances are averaged. ``mean`` defaults to the pooled mean of all
    samples; pass the known ensemble mean to avoid the per-row mean bias.
    """
    f = np.atleast_2d(np.asarray(series, dtype=float))
    n = f.shape[1]
    max_lag = int(max_lag)
    if max_lag < 0 or n < 10 * max_lag:
        raise ParameterError(f"series of length {n} too short for max_lag={max_lag}")
    m = float(f.mean()) if mean is None else float(mean)
    g = f - m
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = np.sum(g[:, : n - lag] * g[:, lag:]) / (n * f.shape[0])
    return out


def noise_strength(cov, dt):
    """Two-sided integral of an even correlation function: dt (C0 + 2 sum_{l>0} C_l)."""
    cov = np.asarray(cov, dtype=float)
    return float(dt * (cov[0] + 2.0 * cov[1:].sum()))


def density_distance(a, b):
    """L1 distance sum |P_a - P_b| dx, in [0, 2]."""
    if not a.same_grid(b):
        raise AnalysisError("density grids differ")
    return float(np.sum(np.abs(a.values - b.values)) * a.dx)


def _relax(t, v_inf, amp, rate):
    return v_inf + amp * np.exp(-rate * t)


def fit_exponential_relaxation(t, v, t_min=0.0, t_max=None):
    """Fit v(t) = v_inf + A exp(-rate t); FitResult carries the rate."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    t_max = t[-1] if t_max is None else t_max
    sel = (t >= t_min) & (t <= t_max)
    ts, vs = t[sel], v[sel]
    if ts.size < 4:
        raise AnalysisError("too few points for a relaxation fit")
    # initial rate from the log-decay between the window ends
    span = vs[0] - vs[-1]
    guess_rate = 1.0 / max(ts[-1] - ts[0], 1e-12)
    half = np.nonzero(np.abs(vs - vs[-1]) <= 0.5 * abs(span))[0]
    if half.size and abs(span) > 0:
        guess_rate = math.log(2.0) / max(ts[half[0]] - ts[0], 1e-12)
    p0 = (vs[-1], span * math.exp(guess_rate * ts[0]), guess_rate)
    try:
        popt, pcov = curve_fit(_relax, ts, vs, p0=p0, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise AnalysisError(f"relaxation fit failed: {exc}", residuals=vs - np.mean(vs)) from exc
    resid = vs - _relax(ts, *popt)
    err = float(np.sqrt(pcov[2, 2])) if np.all(np.isfinite(pcov)) else float("inf")
    if not (np.isfinite(popt[2]) and popt[2] > 0):
        raise AnalysisError("relaxation fit gave a non-positive rate", residuals=resid)
    return FitResult(float(popt[2]), err, float(np.linalg.norm(resid)), (float(ts[0]), float(ts[-1])))
