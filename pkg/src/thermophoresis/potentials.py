"""External potentials V(x) acting on the Brownian particle."""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ParameterError

POTENTIAL_KINDS = ("none", "harmonic", "tabulated")


@dataclass(frozen=True)
class Potential:
    """``none``, ``harmonic`` (V = k x^2 / 2 with k = M w0^2) or a tabulated V(x)."""

    kind: str = "none"
    stiffness: float = 0.0
    table: tuple = None
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ParameterError(f"unknown potential kind {self.kind!r}")
        if self.kind == "harmonic" and not self.stiffness > 0:
            raise ParameterError("harmonic potential needs positive stiffness")
        if self.kind == "tabulated":
            x, V = (np.asarray(a, dtype=float) for a in self.table)
            object.__setattr__(self, "_spline", CubicSpline(x, V, bc_type="natural"))

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def harmonic(cls, mass, omega0):
        return cls("harmonic", stiffness=float(mass) * float(omega0) ** 2)

    @classmethod
    def tabulated(cls, x, V):
        return cls("tabulated", table=(np.asarray(x, float), np.asarray(V, float)))

    def V(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            return self._spline(x)
        return 0.5 * self.stiffness * x**2

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            return self._spline(x, 1)
        return self.stiffness * x

    def d2V(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            return self._spline(x, 2)
        return np.full(x.shape, self.stiffness)

    def max_curvature(self, lo, hi):
        if self.kind != "tabulated":
            return self.stiffness
        return float(np.max(np.abs(self.d2V(np.linspace(lo, hi, 4001)))))
