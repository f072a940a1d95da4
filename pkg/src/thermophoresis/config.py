"""Experiment configuration: YAML loading, validation and object construction.

Validation collects every problem before raising, so a single run reports
all bad keys at once.
"""

import copy
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import langevin, spectral
from .errors import ConfigError, ThermoError
from .micro_two import WeightFunction
from .potentials import Potential
from .temperature import PressureModel, TemperatureField, kappa_from_pressure


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


NUM, INT, STR, BOOL, ANY = (float, int), int, str, bool, object

# section -> key -> (types, default, check, description of check)
SCHEMA = {
    "experiment": {"name": (STR, "thermophoresis", None, "")},
    "sim": {"seed": (INT, 12345, _nonneg, "must be >= 0")},
    "output": {"dir": (STR, "results", None, "")},
    "units": {"k_B": (NUM, 1.0, lambda v: v == 1, "only k_B = 1 is supported")},
    "temperature": {
        "profile": (STR, "linear", lambda v: v in ("constant", "linear", "exponential", "tabulated"),
                    "must be constant|linear|exponential|tabulated"),
        "T0": (NUM, 1.0, _pos, "must be > 0"),
        "slope": (NUM, 0.2, None, ""),
        "decay_length": (NUM, 10.0, _pos, "must be > 0"),
        "table_path": (STR, None, None, ""),
        "x0": (NUM, 0.0, None, ""),
    },
    "pressure": {
        "p": (NUM, None, _pos, "must be > 0"),
        "V": (NUM, None, _pos, "must be > 0"),
        "A": (NUM, None, _pos, "must be > 0"),
        "r": (NUM, None, _pos, "must be > 0"),
    },
    "bath": {
        "family": (STR, "ohmic", lambda v: v in spectral.FAMILIES, "must be ohmic|power-law"),
        "eta": (NUM, 1.0, _pos, "must be > 0"),
        "exponent": (NUM, 1.0, _pos, "must be > 0"),
        "cutoff": (NUM, 50.0, _pos, "must be > 0"),
        "n_oscillators": (INT, 4000, lambda v: v >= 1, "must be >= 1"),
        "omega_max": (NUM, None, _pos, "must be > 0"),
    },
    "box": {"length": (NUM, 10.0, _pos, "must be > 0")},
    "potential": {
        "kind": (STR, "none", lambda v: v in ("none", "harmonic", "tabulated"),
                 "must be none|harmonic|tabulated"),
        "omega0": (NUM, 1.0, _pos, "must be > 0"),
        "table_path": (STR, None, None, ""),
    },
    "langevin": {
        "model": (STR, "overdamped1", lambda v: v in langevin.MODELS,
                  "must be underdamped1|overdamped1|overdamped2"),
        "n_traj": (INT, 10000, lambda v: v >= 1, "must be >= 1"),
        "dt": (NUM, 0.01, _pos, "must be > 0"),
        "t_final": (NUM, 50.0, _nonneg, "must be >= 0"),
        "x0": (ANY, "uniform", None, ""),
        "kappa": (NUM, 0.5, _nonneg, "must be >= 0"),
        "alpha_tilde": (NUM, 0.0, None, ""),
        "mass": (NUM, 1.0, _pos, "must be > 0"),
        "approximation": (STR, "local_flat", lambda v: v in langevin.APPROXIMATIONS,
                          "must be full|local|local_flat"),
        "n_records": (INT, 21, lambda v: v >= 2, "must be >= 2"),
    },
    "micro1": {
        "n_realizations": (INT, 20, lambda v: v >= 1, "must be >= 1"),
        "dt": (NUM, 1.0e-4, _pos, "must be > 0"),
        "t_final": (NUM, 1.0, _pos, "must be > 0"),
        "clamped": (BOOL, True, None, ""),
        "alpha_tilde": (NUM, None, None, ""),
        "mass": (NUM, 1.0, _pos, "must be > 0"),
        "x0": (NUM, 0.0, None, ""),
        "v0": (NUM, 0.0, None, ""),
        "n_records": (INT, 101, lambda v: v >= 2, "must be >= 2"),
    },
    "micro2": {
        "n_sites": (INT, 128, lambda v: v >= 1, "must be >= 1"),
        "n_oscillators_per_site": (INT, 1000, lambda v: v >= 1, "must be >= 1"),
        "sigma": (NUM, 0.1, _pos, "must be > 0"),
        "box_length": (NUM, 10.0, _pos, "must be > 0"),
        "dt": (NUM, 1.0e-4, _pos, "must be > 0"),
        "t_final": (NUM, 1.0, _pos, "must be > 0"),
        "clamped": (BOOL, True, None, ""),
        "n_realizations": (INT, 20, lambda v: v >= 1, "must be >= 1"),
        "mass": (NUM, 1.0, _pos, "must be > 0"),
        "x0": (NUM, 0.0, None, ""),
        "v0": (NUM, 0.0, None, ""),
        "n_records": (INT, 101, lambda v: v >= 2, "must be >= 2"),
    },
    "fpe": {
        "n_cells": (INT, 512, lambda v: v >= 8, "must be >= 8"),
        "dt": (NUM, None, _pos, "must be > 0"),
        "t_final": (NUM, 100.0, _nonneg, "must be >= 0"),
        "initial": (STR, "uniform", None, ""),
        "scheme": (STR, "upwind", lambda v: v in ("upwind", "exponential"),
                   "must be upwind|exponential"),
    },
    "analysis": {"n_bins": (INT, 32, lambda v: v >= 8, "must be >= 8")},
}

_GAUSS = re.compile(r"^\s*gaussian\s*\(\s*([^,]+)\s*,\s*([^)]+)\)\s*$")


def parse_initial(value, problems, key):
    """'uniform', a number, or 'gaussian(x0, s)' -> run_ensemble form."""
    if isinstance(value, bool):
        problems.append(f"{key}: expected uniform, a number or gaussian(x0, s)")
        return "uniform"
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        if value.strip() == "uniform":
            return "uniform"
        m = _GAUSS.match(value)
        if m:
            try:
                x0, s = float(m.group(1)), float(m.group(2))
            except ValueError:
                pass
            else:
                if s > 0:
                    return ("gaussian", x0, s)
    problems.append(f"{key}: expected uniform, a number or gaussian(x0, s) with s > 0")
    return "uniform"


def defaults():
    return {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


def _typed(value, types):
    if types is ANY:
        return True
    if types is BOOL:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if types is INT:
        return isinstance(value, int)
    if types is NUM:
        return isinstance(value, (int, float)) and math.isfinite(value)
    return isinstance(value, types)


def validate_document(doc):
    """Merge ``doc`` over the defaults; returns (merged, problems)."""
    problems = []
    merged = defaults()
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        return merged, ["config root must be a mapping of sections"]
    for sec, body in doc.items():
        if sec not in SCHEMA:
            problems.append(f"unknown section {sec!r}")
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            problems.append(f"section {sec!r} must be a mapping")
            continue
        for key, value in body.items():
            if key not in SCHEMA[sec]:
                problems.append(f"unknown key {sec}.{key}")
                continue
            types, _, check, why = SCHEMA[sec][key]
            if value is None:
                merged[sec][key] = None
                continue
            if not _typed(value, types):
                problems.append(f"{sec}.{key}: wrong type {type(value).__name__}")
                continue
            if types is NUM:
                value = float(value)
            if check is not None and not check(value):
                problems.append(f"{sec}.{key}={value!r}: {why}")
                continue
            merged[sec][key] = value
    return merged, problems


@dataclass
class Experiment:
    """Validated configuration plus the model objects built from it."""

    raw: dict
    field: TemperatureField
    potential: Potential
    bath: spectral.SpectralModel
    kappa: float
    initial: object
    fpe_initial: object
    base_dir: Path

    @property
    def seed(self):
        return self.raw["sim"]["seed"]

    @property
    def box(self):
        half = 0.5 * self.raw["box"]["length"]
        return (-half, half)

    def discrete_bath(self, n=None):
        b = self.raw["bath"]
        n = n or b["n_oscillators"]
        w_max = b["omega_max"] or 10.0 * b["cutoff"]
        return spectral.discretize(self.bath, n, w_max)

    def langevin_params(self, model=None):
        lc = self.raw["langevin"]
        model = model or lc["model"]
        if model == "overdamped2":
            m2 = self.raw["micro2"]
            w = WeightFunction(sigma=m2["sigma"], box_length=m2["box_length"])
            return langevin.EffectiveParamsII(w, self.field, eta=self.raw["bath"]["eta"],
                                              potential=self.potential, box=self.box,
                                              approximation=lc["approximation"])
        return langevin.EffectiveParamsI(self.field, mass=lc["mass"], eta=self.raw["bath"]["eta"],
                                         alpha_tilde=lc["alpha_tilde"], kappa=self.kappa,
                                         potential=self.potential, box=self.box)


def _read_table(path, problems, key):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=0, comments="#", ndmin=2)
    except ValueError:
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            problems.append(f"{key}: cannot read {path}: {exc}")
            return None
    except OSError as exc:
        problems.append(f"{key}: cannot read {path}: {exc}")
        return None
    if data.shape[1] < 2:
        problems.append(f"{key}: {path} needs two columns")
        return None
    return data[:, 0], data[:, 1]


def build(doc, base_dir="."):
    """Validate a parsed document and construct the experiment; raises ConfigError."""
    cfg, problems = validate_document(copy.deepcopy(doc))
    base_dir = Path(base_dir)
    half = 0.5 * cfg["box"]["length"]
    domain = (-half, half)

    t = cfg["temperature"]
    fld = None
    try:
        if t["profile"] == "constant":
            fld = TemperatureField.constant(t["T0"], domain)
        elif t["profile"] == "linear":
            fld = TemperatureField.linear(t["T0"], t["slope"], domain, x0=t["x0"])
        elif t["profile"] == "exponential":
            fld = TemperatureField.exponential(t["T0"], t["decay_length"], domain, x0=t["x0"])
        else:
            if not t["table_path"]:
                problems.append("temperature.table_path required for a tabulated profile")
            else:
                path = base_dir / t["table_path"]
                if not path.exists():
                    problems.append(f"temperature.table_path: {path} does not exist")
                else:
                    fld = TemperatureField.from_csv(path, domain=domain, x0=t["x0"])
    except ThermoError as exc:
        problems.append(f"temperature: {exc}")

    pc = cfg["potential"]
    pot = Potential.none()
    try:
        if pc["kind"] == "harmonic":
            pot = Potential.harmonic(cfg["langevin"]["mass"], pc["omega0"])
        elif pc["kind"] == "tabulated":
            if not pc["table_path"]:
                problems.append("potential.table_path required for a tabulated potential")
            else:
                table = _read_table(base_dir / pc["table_path"], problems, "potential.table_path")
                if table is not None:
                    pot = Potential.tabulated(*table)
    except ThermoError as exc:
        problems.append(f"potential: {exc}")

    b = cfg["bath"]
    bath = None
    try:
        bath = spectral.SpectralModel(b["family"], b["eta"], b["exponent"], b["cutoff"])
    except ThermoError as exc:
        problems.append(f"bath: {exc}")

    kappa = cfg["langevin"]["kappa"]
    pr = cfg["pressure"]
    if any(v is not None for v in pr.values()):
        try:
            pm = PressureModel(pr["p"], pr["V"], pr["A"], pr["r"])
            if fld is not None:
                kappa = kappa_from_pressure(pm, fld.T0)
        except (ThermoError, TypeError) as exc:
            problems.append(f"pressure: {exc}")

    initial = parse_initial(cfg["langevin"]["x0"], problems, "langevin.x0")
    fpe_initial = parse_initial(cfg["fpe"]["initial"], problems, "fpe.initial")
    if isinstance(fpe_initial, float):
        problems.append("fpe.initial: must be uniform or gaussian(x0, s)")

    m1, m2 = cfg["micro1"], cfg["micro2"]
    for sec in ("micro1", "micro2"):
        if not abs(cfg[sec]["x0"]) < half:
            problems.append(f"{sec}.x0 must lie inside the box")
    if m2["sigma"] >= m2["box_length"] / 2:
        problems.append("micro2.sigma must be smaller than half of micro2.box_length")
    if m2["box_length"] > cfg["box"]["length"] + 1e-12:
        problems.append("micro2.box_length must not exceed box.length (temperature domain)")
    if m1["alpha_tilde"] is not None and bath is not None and not math.isfinite(m1["alpha_tilde"]):
        problems.append("micro1.alpha_tilde must be finite")

    lc = cfg["langevin"]
    if lc["t_final"] > 0:
        n = lc["t_final"] / lc["dt"]
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            problems.append("langevin.t_final must be a whole number of langevin.dt steps")
    exp = Experiment(cfg, fld, pot, bath, kappa, initial, fpe_initial, base_dir)
    if not problems and fld is not None:
        try:
            params = exp.langevin_params()
            langevin._check_dt(lc["model"], params, lc["dt"])
        except ThermoError as exc:
            problems.append(f"langevin: {exc}")
    if problems:
        raise ConfigError(problems)
    return exp


def load(path):
    """Read and validate a YAML file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"invalid YAML in {path}: {exc}"]) from exc
    return build(doc, base_dir=path.parent)
