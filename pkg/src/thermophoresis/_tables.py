"""Uniform-grid cubic tables evaluated inside numba kernels.

Every position-dependent coefficient handed to a compiled integrator is
frozen into one of these tables, so the kernels never call back into Python.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class CubicTable:
    """Natural cubic spline on ``n`` uniform knots over ``[lo, hi]``.

    ``coef[i]`` holds the local power-basis coefficients of interval ``i``
    (highest power first), in the layout of ``scipy.interpolate.CubicSpline.c``.
    """

    lo: float
    hi: float
    coef: np.ndarray

    @classmethod
    def from_function(cls, func, lo, hi, n=1024):
        x = np.linspace(lo, hi, n)
        y = np.asarray(func(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).copy()
        spline = CubicSpline(x, y, bc_type="natural")
        return cls(float(lo), float(hi), np.ascontiguousarray(spline.c.T))

    @property
    def dx(self):
        return (self.hi - self.lo) / self.coef.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = self.coef.shape[0]
        i = np.clip(((x - self.lo) / self.dx).astype(np.int64), 0, n - 1)
        t = x - (self.lo + i * self.dx)
        c = self.coef[i]
        out = ((c[..., 0] * t + c[..., 1]) * t + c[..., 2]) * t + c[..., 3]
        return out[()] if out.ndim == 0 else out

    def args(self):
        return self.lo, self.dx, self.coef


@numba.njit(cache=True, nogil=True)
def table_eval(lo, dx, coef, x):
    n = coef.shape[0]
    i = int((x - lo) / dx)
    if i < 0:
        i = 0
    elif i >= n:
        i = n - 1
    t = x - (lo + i * dx)
    return ((coef[i, 0] * t + coef[i, 1]) * t + coef[i, 2]) * t + coef[i, 3]


@numba.njit(cache=True, nogil=True)
def fold_into_box(x, half):
    """Reflect ``x`` into ``[-half, half]``; returns (x, number of reflections)."""
    flips = 0
    if not np.isfinite(x):
        return x, 0
    while x > half or x < -half:
        if x > half:
            x = 2.0 * half - x
        else:
            x = -2.0 * half - x
        flips += 1
    return x, flips
