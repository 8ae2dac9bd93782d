"""Command-line front end.

Subcommands: ``solve``, ``phase-transition``, ``demo-image``, ``rate-compare``,
``check-concentration``, ``init-study``. Exit codes: 0 on success, 1 on a
usage or configuration error, 2 on a runtime error. Every run is
deterministic given its flags; all randomness derives from --seed.

Options may also come from a JSON config file (--config) whose keys match
the flag names with dashes replaced by underscores; explicit flags override
file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments, fileio, solver
from .errors import BlindcalError
from .model import GroundTruth, generate_ensemble, sense
from .seeding import derive_seed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _output_dir(args) -> str:
    out = args.get("out") or os.environ.get("BLINDCAL_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _parse_values(raw, kind=float):
    if isinstance(raw, (list, tuple)):
        return tuple(kind(v) for v in raw)
    return tuple(kind(v) for v in str(raw).split(",") if str(v).strip())


def _merge_config(values: dict, config_path, defaults: dict) -> dict:
    """Resolve each option as flag > config file > default."""
    config = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {config_path} is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise UsageError(f"config {config_path} must be a JSON object")
        for key in config:
            if key not in defaults:
                raise UsageError(f"config {config_path}: unknown key {key!r}")
    merged = {}
    for key, default in defaults.items():
        if values.get(key) is not None:
            merged[key] = values[key]
        elif key in config:
            merged[key] = config[key]
        else:
            merged[key] = default
    return merged


def _require(condition: bool, message: str):
    if not condition:
        raise UsageError(message)


def _check_common(a: dict):
    _require(a["n"] >= 1 and a["m"] >= 1, "n and m must be positive integers")
    _require(0.0 <= a["rho"] < 1.0, "rho must lie in [0, 1)")
    _require(a["tol"] > 0.0, "tol must be positive")
    _require(a["max_iterations"] >= 1, "max-iterations must be at least 1")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

_SOLVE_DEFAULTS = dict(n=64, m=16, p=64, rho=0.05, seed=0, tol=1e-7,
                       step_mode="line-search", mu=1e-4, max_iterations=100_000,
                       no_projection=False, distribution="gaussian",
                       fmt="csv", x_file=None, d_file=None, out=None)


def _cmd_solve(a: dict) -> int:
    _check_common(a)
    _require(a["p"] >= 1, "p must be a positive integer")
    out = _output_dir(a)

    if a["x_file"] or a["d_file"]:
        _require(a["x_file"] and a["d_file"], "provide both --x-file and --d-file")
        x = fileio.read_vector_file(a["x_file"])
        d = fileio.read_vector_file(a["d_file"])
        truth = GroundTruth(x=x, d=d, rho=a["rho"])
        ensemble = generate_ensemble(x.size, d.size, a["p"], a["distribution"],
                                     derive_seed(a["seed"], [("ensemble", 0)]))
        y = sense(ensemble, x, d)
        inst = experiments.Instance(truth=truth, ensemble=ensemble, y=y)
    else:
        inst = experiments.draw_instance(a["n"], a["m"], a["p"], a["rho"],
                                         a["seed"], a["distribution"])

    mode = solver.LINE_SEARCH if a["step_mode"] == "line-search" else solver.FIXED
    config = solver.SolverConfig(
        step_mode=mode, mu=a["mu"] if mode == solver.FIXED else None,
        rho=a["rho"], objective_tolerance=a["tol"],
        max_iterations=a["max_iterations"],
        apply_C_rho_projection=not a["no_projection"])
    result = solver.solve(inst.ensemble, inst.y, config, truth=inst.truth)

    write_vec = fileio.write_vector_csv if a["fmt"] == "csv" else fileio.write_array_binary
    ext = "csv" if a["fmt"] == "csv" else "bcal"
    write_vec(os.path.join(out, f"x_hat.{ext}"), result.x_hat)
    write_vec(os.path.join(out, f"d_hat.{ext}"), result.d_hat)
    fileio.write_trace_csv(os.path.join(out, "trace.csv"), result.trace)

    error_db = experiments.to_db(
        experiments.recovery_error(result.x_hat, result.d_hat, inst.truth))
    fileio.write_report_json(os.path.join(out, "summary.json"), {
        "error_db": error_db, "iterations": result.iterations,
        "stop_reason": result.stop_reason, "objective": result.objective,
    })
    print(f"solve: {result.stop_reason} after {result.iterations} iterations, "
          f"f = {result.objective:.3e}, error = {error_db:.2f} dB")
    return 0


# ---------------------------------------------------------------------------
# phase-transition
# ---------------------------------------------------------------------------

_PHASE_DEFAULTS = dict(n=64, m=16, p_values="4,8,16,32,64,128,256",
                       rho_values="1e-3,1e-2,1e-1,0.3,0.6,0.99",
                       trials=10, zeta_db=-70.0, seed=0, tol=1e-7,
                       max_iterations=3000, workers=1, full_scale=False,
                       out=None)


def _cmd_phase_transition(a: dict) -> int:
    if a["full_scale"]:
        a = dict(a, n=256, m=64, p_values="4,8,16,32,64,128,256,512,1024",
                 rho_values="1e-3,1e-2,1e-1,0.3,0.6,0.99", max_iterations=20_000)
    p_values = _parse_values(a["p_values"], int)
    rho_values = _parse_values(a["rho_values"], float)
    _require(len(p_values) > 0 and len(rho_values) > 0,
             "p-values and rho-values must be non-empty")
    _require(all(p >= 1 for p in p_values), "p values must be positive")
    _require(all(0.0 <= r < 1.0 for r in rho_values), "rho values must lie in [0, 1)")
    _require(a["trials"] >= 1, "trials must be at least 1")
    _require(a["zeta_db"] < 0.0, "zeta-db must be negative")
    _require(a["workers"] >= 1, "workers must be at least 1")
    out = _output_dir(a)

    spec = experiments.PhaseGridSpec(
        n=a["n"], m=a["m"], p_values=p_values, rho_values=rho_values,
        trials_per_cell=a["trials"], zeta_db=a["zeta_db"], base_seed=a["seed"],
        tolerance=a["tol"], max_iterations=a["max_iterations"])
    result = experiments.run_phase_transition(spec, workers=a["workers"])
    path = os.path.join(out, "phase_grid.csv")
    fileio.write_grid_csv(path, result)
    print(f"phase-transition: wrote {path}")
    for ip, p in enumerate(p_values):
        cells = " ".join(f"{result.success_probability[ip, ir]:.2f}"
                         for ir in range(len(rho_values)))
        print(f"  p={p:>5d}: {cells}")
    return 0


# ---------------------------------------------------------------------------
# demo-image
# ---------------------------------------------------------------------------

_DEMO_DEFAULTS = dict(input=None, m=64, p=None, rho=0.99, seed=0, tol=1e-6,
                      max_iterations=100_000, out=None)


def _cmd_demo_image(a: dict) -> int:
    _require(a["input"] is not None, "demo-image requires --input")
    _require(a["m"] >= 1, "m must be a positive integer")
    _require(0.0 <= a["rho"] < 1.0, "rho must lie in [0, 1)")
    _require(a["tol"] > 0.0, "tol must be positive")
    out = _output_dir(a)
    p = a["p"]
    if p is None:
        image = fileio.read_image(a["input"])
        n = image.shape[1] * image.shape[2]
        p = max(1, int(round(2 * n / a["m"])))  # mp = 2n default
    _require(p >= 1, "p must be a positive integer")
    report = experiments.run_imaging_demo(
        a["input"], m=a["m"], p=p, rho=a["rho"], seed=a["seed"], tol=a["tol"],
        max_iterations=a["max_iterations"], out_dir=out)
    print(f"demo-image: blind error = {report.error_db:.2f} dB, "
          f"LS baseline = {report.ls_error_db:.2f} dB "
          f"({report.iterations} iterations, {report.stop_reason})")
    return 0


# ---------------------------------------------------------------------------
# rate-compare
# ---------------------------------------------------------------------------

_RATE_DEFAULTS = dict(n=64, m=16, p=64, rho=0.5, seed=0, tol=1e-7, mu=1e-4,
                      max_iterations=400_000, out=None)


def _cmd_rate_compare(a: dict) -> int:
    _check_common(a)
    _require(a["p"] >= 1, "p must be a positive integer")
    _require(a["mu"] > 0.0, "mu must be positive")
    out = _output_dir(a)
    spec = experiments.RateComparisonSpec(
        n=a["n"], m=a["m"], p=a["p"], rho=a["rho"], seed=a["seed"],
        tolerance=a["tol"], mu=a["mu"], max_iterations=a["max_iterations"])
    result = experiments.run_rate_comparison(spec)
    fileio.write_trace_csv(os.path.join(out, "trace_line_search.csv"),
                           result.line_search.trace)
    fileio.write_trace_csv(os.path.join(out, "trace_fixed.csv"), result.fixed.trace)
    fileio.write_report_json(os.path.join(out, "rate_compare.json"), {
        "line_search": {"iterations": result.line_search.iterations,
                        "stop_reason": result.line_search.stop_reason,
                        "error_db": result.line_search_error_db},
        "fixed": {"iterations": result.fixed.iterations,
                  "stop_reason": result.fixed.stop_reason,
                  "error_db": result.fixed_error_db},
    })
    print(f"rate-compare: line search {result.line_search.iterations} iterations "
          f"vs fixed {result.fixed.iterations} iterations")
    return 0


# ---------------------------------------------------------------------------
# check-concentration
# ---------------------------------------------------------------------------

_CONC_DEFAULTS = dict(n=32, m=16, p=100, theta="ones", trials=20,
                      distribution="gaussian", seed=0, out=None)


def _cmd_check_concentration(a: dict) -> int:
    _require(a["n"] >= 1 and a["m"] >= 1 and a["p"] >= 1,
             "n, m, p must be positive integers")
    _require(a["trials"] >= 1, "trials must be at least 1")
    out = _output_dir(a)
    if a["theta"] == "ones":
        theta = np.ones(a["m"])
    elif a["theta"] == "e1":
        theta = np.zeros(a["m"])
        theta[0] = 1.0
    else:
        theta = np.asarray(_parse_values(a["theta"], float))
        _require(theta.size == a["m"], f"theta must have {a['m']} entries")
    stats = experiments.check_concentration(
        a["n"], a["m"], a["p"], a["distribution"], theta, a["trials"], a["seed"])
    fileio.write_report_json(os.path.join(out, "concentration.json"), {
        "max_deviation": stats["max_deviation"],
        "mean_deviation": stats["mean_deviation"],
    })
    print(f"check-concentration: max = {stats['max_deviation']:.4f}, "
          f"mean = {stats['mean_deviation']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# init-study
# ---------------------------------------------------------------------------

_INIT_DEFAULTS = dict(n=32, m=16, p_values="16,32,64,128,256,512,1024",
                      trials=50, rho=0.5, seed=0, out=None)


def _cmd_init_study(a: dict) -> int:
    _require(a["n"] >= 1 and a["m"] >= 1, "n and m must be positive integers")
    _require(0.0 <= a["rho"] < 1.0, "rho must lie in [0, 1)")
    _require(a["trials"] >= 1, "trials must be at least 1")
    p_values = _parse_values(a["p_values"], int)
    _require(all(p >= 1 for p in p_values), "p values must be positive")
    out = _output_dir(a)
    result = experiments.run_init_study(
        n=a["n"], m=a["m"], p_values=p_values, trials=a["trials"],
        rho=a["rho"], base_seed=a["seed"])
    path = os.path.join(out, "init_study.csv")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("mp,mean_relative_error\n")
        for mp, err in zip(result.mp_values, result.mean_relative_error):
            fh.write(f"{mp},{err!r}\n")
    print(f"init-study: slope = {result.slope:.3f} (wrote {path})")
    return 0


# ---------------------------------------------------------------------------
# parser assembly and dispatch
# ---------------------------------------------------------------------------

def _add_common(sub, *names):
    flags = {
        "n": lambda: sub.add_argument("--n", type=int),
        "m": lambda: sub.add_argument("--m", type=int),
        "p": lambda: sub.add_argument("--p", type=int),
        "rho": lambda: sub.add_argument("--rho", type=float),
        "seed": lambda: sub.add_argument("--seed", type=int),
        "tol": lambda: sub.add_argument("--tol", type=float),
        "trials": lambda: sub.add_argument("--trials", type=int),
        "max_iterations": lambda: sub.add_argument("--max-iterations", type=int),
        "out": lambda: sub.add_argument("--out", help="output directory"),
        "distribution": lambda: sub.add_argument(
            "--distribution", choices=["gaussian", "rademacher"]),
        "mu": lambda: sub.add_argument("--mu", type=float),
    }
    for name in names:
        flags[name]()
    sub.add_argument("--config", help="JSON file with option values")


def build_parser() -> _Parser:
    parser = _Parser(prog="blindcal",
                     description="Blind calibration of sensor gains from "
                                 "randomized linear snapshots")
    subs = parser.add_subparsers(dest="command")

    sp = subs.add_parser("solve", help="solve one synthetic or file-based instance")
    _add_common(sp, "n", "m", "p", "rho", "seed", "tol", "max_iterations",
                "out", "distribution", "mu")
    sp.add_argument("--step-mode", dest="step_mode",
                    choices=["line-search", "fixed"])
    sp.add_argument("--no-projection", dest="no_projection", action="store_const",
                    const=True, help="skip the C_rho projection step")
    sp.add_argument("--format", dest="fmt", choices=["csv", "binary"])
    sp.add_argument("--x-file", dest="x_file", help="ground-truth signal vector file")
    sp.add_argument("--d-file", dest="d_file", help="ground-truth gain vector file")

    sp = subs.add_parser("phase-transition", help="success-probability grid over (p, rho)")
    _add_common(sp, "n", "m", "seed", "tol", "trials", "max_iterations", "out")
    sp.add_argument("--p-values", dest="p_values", help="comma-separated snapshot counts")
    sp.add_argument("--rho-values", dest="rho_values", help="comma-separated deviations")
    sp.add_argument("--zeta-db", dest="zeta_db", type=float)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--full-scale", dest="full_scale", action="store_const",
                    const=True, help="run the full-scale grid (slow)")

    sp = subs.add_parser("demo-image", help="blind calibration of an imaging system")
    _add_common(sp, "m", "p", "rho", "seed", "tol", "max_iterations", "out")
    sp.add_argument("--input", help="P5/P6 netpbm image path")

    sp = subs.add_parser("rate-compare", help="line-search vs fixed-step run")
    _add_common(sp, "n", "m", "p", "rho", "seed", "tol", "max_iterations", "out", "mu")

    sp = subs.add_parser("check-concentration", help="weighted covariance deviation")
    _add_common(sp, "n", "m", "p", "seed", "trials", "out", "distribution")
    sp.add_argument("--theta", help="'ones', 'e1', or comma-separated weights")

    sp = subs.add_parser("init-study", help="initialisation proximity vs mp")
    _add_common(sp, "n", "m", "rho", "seed", "trials", "out")
    sp.add_argument("--p-values", dest="p_values", help="comma-separated snapshot counts")

    return parser


_COMMANDS = {
    "solve": (_cmd_solve, _SOLVE_DEFAULTS),
    "phase-transition": (_cmd_phase_transition, _PHASE_DEFAULTS),
    "demo-image": (_cmd_demo_image, _DEMO_DEFAULTS),
    "rate-compare": (_cmd_rate_compare, _RATE_DEFAULTS),
    "check-concentration": (_cmd_check_concentration, _CONC_DEFAULTS),
    "init-study": (_cmd_init_study, _INIT_DEFAULTS),
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        handler, defaults = _COMMANDS[args.command]
        values = vars(args)
        merged = _merge_config(values, values.get("config"), defaults)
        return handler(merged)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (BlindcalError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
