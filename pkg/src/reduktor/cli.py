"""Batch command-line front end.

Subcommands: solve | series | simulate | compare | asymptote | genericity
| scalar.  Every command reads a JSON config, writes CSV and/or JSON, and
is deterministic given the config, the seed, and any worker count.

Exit codes: 0 success, 1 usage or config error, 2 input validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import convergence_report, convergence_report_to_csv, predict_limit
from .channels import BathModel, genericity_check
from .dstoch import compression
from .errors import (
    ConfigError,
    InputValidationError,
    NumericalError,
    ReduktorError,
)
from .jump_mc import mc_estimate_to_csv, monte_carlo_average
from .scalar import (
    ConstantInput,
    CosineInput,
    PiecewiseInput,
    TabulatedInput,
    piecewise_delay_solve,
    scalar_march,
    scalar_trajectory_to_csv,
    trig_ode_solve,
)
from .volterra import (
    ConstantPath,
    SolverConfig,
    TimeGrid,
    march_solve,
    neumann_series_trajectory,
    trajectory_to_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _pairs_to_complex(data):
    a = np.asarray(data, dtype=float)
    if a.shape[-1] != 2:
        raise ConfigError("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def complex_to_pairs(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _grid_from(cfg):
    try:
        g = cfg["grid"]
        return TimeGrid(t_max=float(g["t_max"]), steps=int(g["steps"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config needs grid.t_max and grid.steps: {exc}") from exc


def _model_from(cfg) -> BathModel:
    try:
        n = int(cfg["n"])
        n2 = int(cfg["n2"])
        blocks = _pairs_to_complex(cfg["B"])
    except KeyError as exc:
        raise ConfigError(f"model config needs n, n2 and B: missing {exc}") from exc
    if blocks.shape != (n2, n2, n, n):
        raise ConfigError(
            f"B has shape {blocks.shape}, expected {(n2, n2, n, n)}")
    basis = _pairs_to_complex(cfg["basis"]) if cfg.get("basis") is not None else None
    return BathModel(blocks, basis=basis)


def _source_from(cfg):
    """Matrix source from a config: bath model or constant matrix."""
    if "constant_M" in cfg:
        return ConstantPath(np.asarray(cfg["constant_M"], dtype=float))
    return _model_from(cfg).m_path()


def _scalar_input_from(cfg):
    try:
        entry = cfg["scalar"]
        variant = entry["variant"]
        if variant == "constant":
            return ConstantInput(float(entry["value"]))
        if variant == "piecewise":
            return PiecewiseInput(float(entry["tau"]),
                                  tuple(entry.get("pattern", (1.0, 0.0))))
        if variant == "trig":
            return CosineInput(float(entry.get("mean", 0.5)),
                               float(entry.get("amplitude", 0.5)))
        if variant == "tabulated":
            return TabulatedInput(entry["times"], entry["values"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scalar input entry: {exc}") from exc
    raise ConfigError(f"unknown scalar variant {variant!r}")


def _write(path, text):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _workers(args):
    if args.workers is not None:
        return max(1, int(args.workers))
    env = os.environ.get("REDUKTOR_WORKERS")
    return max(1, int(env)) if env else 1


def _seed(args, cfg):
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0))


def cmd_solve(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 0.0))
    source = _source_from(cfg)
    traj = march_solve(source, SolverConfig(nu=nu, grid=grid))
    _write(args.out, trajectory_to_csv(traj))
    limit, _part = predict_limit(source, grid.t_max)
    dist = float(np.abs(traj.final - limit.entries).max())
    _say(args, f"final c(Mbar) = {compression(traj.final):.6g}; "
               f"distance to predicted limit = {dist:.6g}")
    return EXIT_OK


def cmd_series(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 0.0))
    n_max = cfg.get("N_max")
    source = _source_from(cfg)
    traj = neumann_series_trajectory(
        source, SolverConfig(nu=nu, grid=grid, n_max=n_max))
    _write(args.out, trajectory_to_csv(traj))
    _say(args, f"final c(Mbar) = {compression(traj.final):.6g}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 0.0))
    R = int(cfg.get("R", 10000))
    seed = _seed(args, cfg)
    workers = _workers(args)
    source = _source_from(cfg)
    est = monte_carlo_average(source, nu, grid.t_max, R, seed, workers=workers)
    _write(args.out, mc_estimate_to_csv(est, nu=nu, T=grid.t_max, workers=None))
    _say(args, f"mean max stderr = {est.stderr.max():.6g} over {R} histories")
    return EXIT_OK


def cmd_compare(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 0.0))
    R = int(cfg.get("R", 10000))
    seed = _seed(args, cfg)
    workers = _workers(args)
    thresholds = cfg.get("thresholds", {})
    tol_series = float(thresholds.get("solver_vs_series", 1e-6))
    sigmas = float(thresholds.get("mc_sigmas", 3.0))
    source = _source_from(cfg)
    scfg = SolverConfig(nu=nu, grid=grid, n_max=cfg.get("N_max"))

    verdict = {"pairs": {}, "overall_pass": True}
    failure = False
    traj = march_solve(source, scfg)
    try:
        series = neumann_series_trajectory(source, scfg)
        gap = float(np.abs(series.values - traj.values).max())
        ok = gap <= tol_series
        verdict["pairs"]["march_vs_series"] = {
            "max_abs": gap, "tol": tol_series, "pass": ok}
        failure |= not ok
    except NumericalError as exc:
        verdict["pairs"]["march_vs_series"] = {
            "pass": False, "error": type(exc).__name__,
            "advice": f"{exc} -- refine grid.steps so that h * nu <= 0.5"}
        failure = True

    est = monte_carlo_average(source, nu, grid.t_max, R, seed, workers=workers)
    band = sigmas * est.stderr + 1e-12
    within = np.abs(est.mean - traj.final) <= band
    ok = bool(within.all())
    verdict["pairs"]["march_vs_mc"] = {
        "max_abs": float(np.abs(est.mean - traj.final).max()),
        "band": f"{sigmas:g} stderr",
        "entries_within": int(within.sum()),
        "entries_total": int(within.size),
        "pass": ok,
    }
    failure |= not ok
    verdict["overall_pass"] = not failure
    text = json.dumps(verdict, indent=2, sort_keys=True) + "\n"
    _write(args.out, text)
    if args.out:
        _say(args, text.rstrip())
    return EXIT_NUMERICAL if failure else EXIT_OK


def cmd_asymptote(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 1.0))
    thresholds = cfg.get("thresholds", {})
    source = _source_from(cfg)
    report = convergence_report(
        source, nu, SolverConfig(nu=nu, grid=grid),
        eps_conv=float(thresholds.get("eps_conv", 1e-3)))
    _write(args.out, convergence_report_to_csv(report))
    verdict = {
        "verdict": report.verdict,
        "final_distance": report.final_distance,
        "final_compression": float(report.c_values[-1]),
        "max_compression": float(report.c_values.max()),
        "blocks": [list(b) for b in report.partition.blocks],
        "id_sector": list(report.partition.id_sector),
    }
    print(json.dumps(verdict, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_genericity(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    model = _model_from(cfg)
    threshold = float(cfg.get("thresholds", {}).get("delta", 0.999))
    report = genericity_check(model, grid.nodes[1:], delta_threshold=threshold)
    verdict = {
        "generic": report.generic,
        "witness_t": report.witness_t,
        "c_min": report.c_min,
    }
    text = json.dumps(verdict, indent=2, sort_keys=True) + "\n"
    _write(args.out, text)
    if args.out:
        _say(args, text.rstrip())
    return EXIT_OK


def cmd_scalar(args):
    cfg = _load_config(args.config)
    grid = _grid_from(cfg)
    nu = float(cfg.get("nu", 1.0))
    alpha = _scalar_input_from(cfg)
    traj = scalar_march(alpha, nu, grid)
    _write(args.out, scalar_trajectory_to_csv(traj))
    notes = []
    if isinstance(alpha, PiecewiseInput) and tuple(alpha.pattern) == (1.0, 0.0):
        k = int(round(grid.t_max / alpha.tau))
        if abs(k * alpha.tau - grid.t_max) < 1e-9 and k >= 1 \
                and grid.steps % k == 0:
            exact = piecewise_delay_solve(alpha.tau, nu, k,
                                          nodes_per_interval=grid.steps // k)
            gap = float(np.abs(exact.beta - traj.beta).max())
            notes.append(f"max |march - method of steps| = {gap:.3e}")
    if isinstance(alpha, CosineInput) and nu == 1.0 \
            and alpha.mean == 0.5 and alpha.amplitude == 0.5:
        ode = trig_ode_solve(grid)
        gap = float(np.abs(ode.trajectory.beta - traj.beta).max())
        notes.append(f"max |march - ode route| = {gap:.3e}")
    _say(args, f"final beta = {traj.beta[-1]:.6g}"
               + ("; " + "; ".join(notes) if notes else ""))
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "series": cmd_series,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "asymptote": cmd_asymptote,
    "genericity": cmd_genericity,
    "scalar": cmd_scalar,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="reduktor",
        description="Doubly stochastic evolution under Poisson-timed "
                    "stochastic reductions: solvers, simulation, and "
                    "asymptotic reports.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (overrides config)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker count (default env REDUKTOR_WORKERS or 1)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress summary lines")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ReduktorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
