"""Command-line entry point: ``thermophoresis <subcommand> --config run.yaml``.

Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 verification failure.
"""

import argparse
import json
import platform
import sys
import time
import traceback
from pathlib import Path

import numba
import numpy as np
import scipy
import yaml

from . import __version__
from . import analysis as an
from . import fokker_planck as fp
from . import langevin as lg
from . import micro_one as m1
from . import micro_two as m2
from . import spectral, verification
from .config import build, load
from .csvio import read_csv, write_csv, write_rows
from .errors import ConfigError, ThermoError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4
SUBCOMMANDS = ("simulate-langevin", "simulate-micro1", "simulate-micro2", "solve-fpe",
               "analyze", "verify", "emit-plots")


def _manifest(out, command, exp, seed, threads, wall, outputs, extra=None):
    doc = {
        "command": command,
        "experiment": exp.raw["experiment"]["name"],
        "seed": seed,
        "threads": threads,
        "config": exp.raw,
        "versions": {"thermophoresis": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "pyyaml": yaml.__version__},
        "wall_time_s": wall,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path


# -- subcommands ------------------------------------------------------------------

def cmd_simulate_langevin(exp, out, seed, threads):
    lc = exp.raw["langevin"]
    params = exp.langevin_params()
    ens = lg.run_ensemble(lc["model"], params, lc["n_traj"], lc["dt"], lc["t_final"], seed,
                          x0=exp.initial, n_records=lc["n_records"], threads=threads)
    n, m = ens.x.shape
    t = np.tile(ens.times, n)
    ids = np.repeat(np.arange(n, dtype=np.int64), m)
    cols, header = [t, ids, ens.x.ravel()], ["t", "traj_id", "x"]
    if ens.v is not None:
        cols.append(ens.v.ravel())
        header.append("v")
    write_csv(out / "trajectories.csv", header, cols)
    write_csv(out / "snapshot.csv", ["traj_id", "x"], [np.arange(n, dtype=np.int64), ens.x[:, -1]])
    return ["trajectories.csv", "snapshot.csv"]


def _micro1_alpha(exp, spec):
    a = exp.raw["micro1"]["alpha_tilde"]
    return spectral.alpha_tilde_for_kappa(spec, exp.kappa) if a is None else a


def cmd_simulate_micro1(exp, out, seed, threads):
    c = exp.raw["micro1"]
    spec = exp.discrete_bath()
    alpha = _micro1_alpha(exp, spec)
    fld = exp.field
    times = np.linspace(0.0, c["t_final"], c["n_records"])
    n = c["n_realizations"]
    if c["clamped"]:
        forces = m1.clamped_force_series(spec, fld, alpha, c["x0"], times, n, seed, threads=threads)
        ids = np.repeat(np.arange(n, dtype=np.int64), times.size)
        write_csv(out / "micro1_forces.csv", ["t", "realization_id", "force_on_particle"],
                  [np.tile(times, n), ids, forces.ravel()])
        return ["micro1_forces.csv"]
    n_steps = int(round(c["t_final"] / c["dt"]))
    every = max(1, n_steps // (c["n_records"] - 1))

    def run(r):
        st = m1.sample_initial_bath(spec, alpha, fld, c["x0"],
                                    m1.parallel.stream(seed, m1.parallel.MICRO1_RUN, r),
                                    mass=c["mass"], momentum=c["mass"] * c["v0"])
        return m1.integrate(st, fld, exp.potential, c["dt"], n_steps, every, energy=True)

    trs = m1.parallel.map_ordered(run, range(n), threads)
    k = trs[0].times.size
    ids = np.repeat(np.arange(n, dtype=np.int64), k)
    t = np.tile(trs[0].times, n)
    write_csv(out / "micro1_forces.csv", ["t", "realization_id", "force_on_particle"],
              [t, ids, np.concatenate([tr.bath_force for tr in trs])])
    write_csv(out / "micro1_trajectories.csv",
              ["t", "realization_id", "x", "v", "energy", "drive_work"],
              [t, ids] + [np.concatenate([getattr(tr, a) for tr in trs])
                          for a in ("x", "v", "energy", "work")])
    return ["micro1_forces.csv", "micro1_trajectories.csv"]


def cmd_simulate_micro2(exp, out, seed, threads):
    c = exp.raw["micro2"]
    b = exp.raw["bath"]
    spec = spectral.discretize(exp.bath, c["n_oscillators_per_site"],
                               b["omega_max"] or 10.0 * b["cutoff"])
    w = m2.WeightFunction(sigma=c["sigma"], box_length=c["box_length"])
    times = np.linspace(0.0, c["t_final"], c["n_records"])
    n = c["n_realizations"]
    if c["clamped"]:
        forces = m2.clamped_force_series(spec, w, exp.field, c["n_sites"], c["x0"], times, n, seed,
                                         threads=threads)
        ids = np.repeat(np.arange(n, dtype=np.int64), times.size)
        write_csv(out / "micro2_forces.csv", ["t", "realization_id", "force_on_particle"],
                  [np.tile(times, n), ids, forces.ravel()])
        return ["micro2_forces.csv"]
    n_steps = int(round(c["t_final"] / c["dt"]))
    every = max(1, n_steps // (c["n_records"] - 1))

    def run(r):
        st = m2.sample_bath_field(spec, w, exp.field, c["n_sites"], c["x0"],
                                  m2.parallel.stream(seed, m2.parallel.MICRO2_RUN, r),
                                  mass=c["mass"], momentum=c["mass"] * c["v0"])
        return m2.integrate_two(st, exp.potential, c["dt"], n_steps, every, energy=True)

    trs = m2.parallel.map_ordered(run, range(n), threads)
    k = trs[0].times.size
    write_csv(out / "micro2_trajectories.csv", ["t", "realization_id", "x", "v", "energy"],
              [np.tile(trs[0].times, n), np.repeat(np.arange(n, dtype=np.int64), k)]
              + [np.concatenate([getattr(tr, a) for tr in trs]) for a in ("x", "v", "energy")])
    return ["micro2_trajectories.csv"]


def _initial_profile(exp, lo, hi, n):
    init = exp.fpe_initial
    if init == "uniform":
        return fp.DensityProfile.uniform(lo, hi, n)
    return fp.DensityProfile.gaussian(lo, hi, n, init[1], init[2])


def cmd_solve_fpe(exp, out, seed, threads):
    c = exp.raw["fpe"]
    params = exp.langevin_params()
    a, D = lg.fpe_coefficients(params)
    lo, hi = params.box
    n = c["n_cells"]
    dt = c["dt"] or fp.stable_dt(a, D, lo, hi, n, c["scheme"])
    P = fp.evolve(a, D, _initial_profile(exp, lo, hi, n), dt, c["t_final"], c["scheme"])
    write_csv(out / "density.csv", ["x", "P"], [P.x, P.values])
    xh, J = fp.flux(a, D, P, c["scheme"])
    write_csv(out / "flux.csv", ["x_half", "J"], [xh, J])
    ss = fp.steady_state_numeric(a, D, lo, hi, n)
    cols, header = [ss.x, ss.values], ["x", "P_numeric"]
    if isinstance(params, lg.EffectiveParamsI) and params.field.has_constant_gradient \
            and params.potential.kind == "none":
        cols.append(fp.steady_state_I(params, n=n).values)
        header.append("P_closed_form")
    write_csv(out / "steady.csv", header, cols)
    return ["density.csv", "flux.csv", "steady.csv"]


def cmd_analyze(exp, out, seed, threads):
    path = out / "trajectories.csv"
    if not path.exists():
        raise ConfigError([f"analyze needs {path}; run simulate-langevin first"])
    header, data = read_csv(path)
    times = np.unique(data[:, 0])
    x = data[:, 2].reshape(-1, times.size)
    params = exp.langevin_params()
    lc = exp.raw["langevin"]
    relax = params.relaxation_time() if lc["model"] == "underdamped1" else 0.0
    ens = lg.TrajectoryEnsemble(lc["model"], times, x, None, seed, tuple(params.box), relax)
    n_bins = exp.raw["analysis"]["n_bins"]
    h = an.histogram(ens, pool=True, n_bins=n_bins)
    fit = an.fit_log_slope(h)
    a, D = lg.fpe_coefficients(params)
    ref = fp.steady_state_numeric(a, D, h.lo, h.hi, n_bins * 16)
    ref_fit = an.fit_log_slope(an.rebin(ref, n_bins))
    l1 = an.density_distance(an.rebin(ref, n_bins), h)
    write_rows(out / "fit.csv", ["quantity", "estimate", "stderr", "window_lo", "window_hi"], [
        ("log_slope", fit.estimate, fit.stderr, *fit.window),
        ("log_slope_steady_state", ref_fit.estimate, ref_fit.stderr, *ref_fit.window),
        ("l1_distance_to_steady_state", l1, float("nan"), h.lo, h.hi),
    ])
    write_csv(out / "histogram.csv", ["x", "P_hist", "P_steady"],
              [h.x, h.values, an.rebin(ref, n_bins).values])
    outputs = ["fit.csv", "histogram.csv"]
    if np.all(np.asarray(exp.field.grad(h.x)) != 0):
        s = an.estimate_soret(h, exp.field)
        write_csv(out / "soret.csv", ["x", "S_T_hat", "S_T_theory"], [s.x, s.S_hat, s.S_theory])
        outputs.append("soret.csv")
    return outputs


def cmd_verify(exp, out, seed, threads):
    results = verification.run_checks(seed)
    print(verification.format_table(results))
    write_csv(out / "verify.csv", ["check_id", "value", "target", "passed", "seconds"],
              [np.arange(len(results), dtype=np.int64), np.array([r.value for r in results]),
               np.array([r.target for r in results]),
               np.array([int(r.passed) for r in results], dtype=np.int64),
               np.array([r.seconds for r in results])])
    (out / "verify_names.txt").write_text("\n".join(r.name for r in results) + "\n")
    return ["verify.csv", "verify_names.txt"], all(r.passed for r in results)


PLOT_SCRIPT = '''"""Plots for the CSV files in this directory (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def columns(name):
    with open(HERE / name) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: [float(r[i]) for r in body] for i, h in enumerate(header)}


def main():
    made = []
    if (HERE / "density.csv").exists():
        d = columns("density.csv")
        plt.figure()
        plt.semilogy(d["x"], d["P"], label="FPE")
        if (HERE / "steady.csv").exists():
            s = columns("steady.csv")
            for key in s:
                if key != "x":
                    plt.semilogy(s["x"], s[key], "--", label=key)
        plt.xlabel("x"); plt.ylabel("P"); plt.legend()
        plt.savefig(HERE / "density.png"); made.append("density.png")
    if (HERE / "histogram.csv").exists():
        h = columns("histogram.csv")
        plt.figure()
        plt.semilogy(h["x"], h["P_hist"], "o", label="ensemble")
        plt.semilogy(h["x"], h["P_steady"], label="steady state")
        plt.xlabel("x"); plt.ylabel("P"); plt.legend()
        plt.savefig(HERE / "histogram.png"); made.append("histogram.png")
    if (HERE / "soret.csv").exists():
        s = columns("soret.csv")
        plt.figure()
        plt.plot(s["x"], s["S_T_hat"], "o", label="estimate")
        plt.plot(s["x"], s["S_T_theory"], label="1/T")
        plt.xlabel("x"); plt.ylabel("S_T"); plt.legend()
        plt.savefig(HERE / "soret.png"); made.append("soret.png")
    for name in ("micro1_forces.csv", "micro2_forces.csv"):
        if (HERE / name).exists():
            f = columns(name)
            first = [i for i, r in enumerate(f["realization_id"]) if r == 0]
            plt.figure()
            plt.plot([f["t"][i] for i in first], [f["force_on_particle"][i] for i in first])
            plt.xlabel("t"); plt.ylabel("force")
            png = name.replace(".csv", ".png")
            plt.savefig(HERE / png); made.append(png)
    print("wrote", ", ".join(made) if made else "nothing (no CSV files found)")


if __name__ == "__main__":
    main()
'''


def cmd_emit_plots(exp, out, seed, threads):
    (out / "plot_results.py").write_text(PLOT_SCRIPT)
    return ["plot_results.py"]


COMMANDS = {
    "simulate-langevin": cmd_simulate_langevin,
    "simulate-micro1": cmd_simulate_micro1,
    "simulate-micro2": cmd_simulate_micro2,
    "solve-fpe": cmd_solve_fpe,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "emit-plots": cmd_emit_plots,
}


def parser():
    p = argparse.ArgumentParser(prog="thermophoresis", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="master seed, overrides sim.seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory, overrides output.dir")
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(["--threads must be >= 1"])
        if args.seed is not None and args.seed < 0:
            raise ConfigError(["--seed must be >= 0"])
        exp = load(args.config) if args.config else build({})
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    seed = exp.seed if args.seed is None else args.seed
    out = Path(args.out or exp.raw["output"]["dir"])
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](exp, out, seed, args.threads)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"configuration error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except ThermoError as exc:
        origin = traceback.extract_tb(exc.__traceback__)[-1]
        print(f"numerical error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"  raised in {Path(origin.filename).stem}.{origin.name}", file=sys.stderr)
        return EXIT_NUMERICAL
    passed = True
    if isinstance(result, tuple):
        result, passed = result
    _manifest(out, args.command, exp, seed, args.threads, time.perf_counter() - t0, result,
              {"passed": passed} if args.command == "verify" else None)
    for name in result:
        print(out / name)
    return EXIT_OK if passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
