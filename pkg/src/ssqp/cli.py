"""Batch command-line front end.

Subcommands: ``solve`` (one run, iterate table to stdout), ``sweep``
(grid over one parameter, one summary row per grid point), ``diagnose``
(degeneracy, coercivity and error-estimate JSON) and ``list``.

Configuration comes from an INI-style file (sections [run], [options],
[metric], [eigencontrol]) overridden by flags; flags win.  Tables use
scientific notation with 16 significant digits so that convergence-order
post-processing is reproducible.  Exit codes: 0 converged, 1 bad
configuration, 2 iteration limit, 3 subproblem failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bench, diagnostics, solver
from .spaces import mass_from_spec

CSV_HEADER = (
    "k,rho,kkt_stationarity,kkt_feasibility,kkt_polar,kkt_total,"
    "err_z,dist_lambda,total_err,order"
)
SWEEP_HEADER = "parameter,value,status,iterations,final_kkt_total,min_order"

_EXIT_BY_STATUS = {
    solver.SolveStatus.CONVERGED: 0,
    solver.SolveStatus.MAX_ITER: 2,
    solver.SolveStatus.SUBPROBLEM_FAILURE: 3,
}

_RHO_DEFAULT = 0.05
_DIAGNOSE_RHO_GRID = [10.0**-k for k in range(1, 7)]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    benchmark: str = "degenerate-line"
    start_offset: str = "default"
    lambda0: str = "auto"
    output: str = "csv"
    seed: int = 0
    rho_rule: str = "proportional"
    theta: float = 1.0
    rho: float = _RHO_DEFAULT
    sigma0: float = 1.0
    sigma1: float = 1.0
    tol: float = 1e-12
    max_iter: int = 50
    mass_z: str | None = None
    mass_y: str | None = None
    eigencontrol: dict = field(default_factory=dict)


def fmt(value) -> str:
    """16 significant digits, scientific; empty for missing values."""
    if value is None:
        return ""
    return f"{float(value):.15e}"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])
    except ValueError as exc:
        raise ConfigError(f"could not parse vector {text!r}") from exc


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    run = parser["run"] if parser.has_section("run") else {}
    for key in ("benchmark", "start_offset", "lambda0", "output"):
        if key in run:
            setattr(cfg, key, run[key])
    if "seed" in run:
        cfg.seed = int(run["seed"])
    opts = parser["options"] if parser.has_section("options") else {}
    if "rho_rule" in opts:
        cfg.rho_rule = opts["rho_rule"]
    for key in ("theta", "rho", "sigma0", "sigma1", "tol"):
        if key in opts:
            setattr(cfg, key, float(opts[key]))
    if "max_iter" in opts:
        cfg.max_iter = int(opts["max_iter"])
    if parser.has_section("metric"):
        cfg.mass_z = parser["metric"].get("mass_z", None)
        cfg.mass_y = parser["metric"].get("mass_y", None)
    if parser.has_section("eigencontrol"):
        sec = parser["eigencontrol"]
        eig: dict = {}
        if "n" in sec:
            eig["n"] = int(sec["n"])
        if "alpha" in sec:
            eig["alpha"] = float(sec["alpha"])
        if "q_d" in sec and sec["q_d"].strip().lower() != "auto":
            eig["q_d"] = float(sec["q_d"])
        if "u_d_mode" in sec:
            eig["u_d_mode"] = int(sec["u_d_mode"])
        if "u_d_amp" in sec:
            eig["u_d_amp"] = float(sec["u_d_amp"])
        cfg.eigencontrol = eig
    return cfg


def apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    simple = {
        "benchmark": "benchmark",
        "start_offset": "start_offset",
        "lambda0": "lambda0",
        "output": "output",
        "seed": "seed",
        "rho_rule": "rho_rule",
        "theta": "theta",
        "rho": "rho",
        "sigma0": "sigma0",
        "sigma1": "sigma1",
        "tol": "tol",
        "max_iter": "max_iter",
    }
    for arg_name, cfg_name in simple.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, cfg_name, value)
    eig_flags = {"n": "n", "alpha": "alpha", "q_d": "q_d",
                 "u_d_mode": "u_d_mode", "u_d_amp": "u_d_amp"}
    for arg_name, key in eig_flags.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            cfg.eigencontrol[key] = value
    return cfg


def build_benchmark(cfg: RunConfig) -> bench.BenchmarkProblem:
    if cfg.benchmark not in bench.list_benchmarks():
        raise ConfigError(f"unknown benchmark {cfg.benchmark!r}; "
                          f"available: {', '.join(bench.list_benchmarks())}")
    overrides: dict = {}
    if cfg.mass_z or cfg.mass_y:
        if cfg.benchmark != "degenerate-line":
            raise ConfigError(f"benchmark {cfg.benchmark!r} has a fixed metric")
        if cfg.mass_z:
            overrides["mass_z"] = mass_from_spec(cfg.mass_z, dim=2)
        if cfg.mass_y:
            overrides["mass_y"] = mass_from_spec(cfg.mass_y, dim=2)
    if cfg.benchmark.startswith("eigencontrol"):
        overrides.update(cfg.eigencontrol)
    try:
        return bench.get_benchmark(cfg.benchmark, **overrides)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def make_options(cfg: RunConfig) -> solver.SolverOptions:
    if cfg.rho_rule == "proportional":
        rule: solver.RhoRule = solver.ErrorProportional(theta=cfg.theta)
    elif cfg.rho_rule == "fixed":
        rule = solver.Fixed(rho=cfg.rho)
    elif cfg.rho_rule == "oracle":
        rule = solver.TrueErrorOracle(sigma0=cfg.sigma0)
    else:
        raise ConfigError(f"unknown rho rule {cfg.rho_rule!r}")
    try:
        return solver.SolverOptions(
            tol=cfg.tol, max_iter=cfg.max_iter, rho_rule=rule, sigma1=cfg.sigma1
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_start(bm: bench.BenchmarkProblem, cfg: RunConfig,
                  radius: float | None = None):
    """z0 and lambda0 from the config's start specification."""
    problem = bm.problem
    base = (bm.reference.z_star.coords if bm.reference is not None
            else np.zeros(problem.Z.dim))
    spec = cfg.start_offset.strip()
    if spec == "default":
        offset = bm.default_start_offset.copy()
    elif spec == "random":
        rng = np.random.default_rng(cfg.seed)
        direction = rng.standard_normal(problem.Z.dim)
        direction /= problem.Z.norm_arr(direction)
        offset = (radius if radius is not None else bm.certified_radius) * direction
    else:
        offset = _parse_vector(spec)
        if offset.size != problem.Z.dim:
            raise ConfigError(
                f"start offset has size {offset.size}, expected {problem.Z.dim}"
            )
    if radius is not None and spec != "random":
        norm = problem.Z.norm_arr(offset)
        if norm > 0:
            offset = offset * (radius / norm)
    z0 = problem.Z.vector(base + offset)
    lam_spec = cfg.lambda0.strip()
    if lam_spec == "auto":
        lam0 = problem.Y.functional(bm.default_lambda0)
    else:
        coeffs = _parse_vector(lam_spec)
        if coeffs.size != problem.Y.dim:
            raise ConfigError(
                f"lambda0 has size {coeffs.size}, expected {problem.Y.dim}"
            )
        lam0 = problem.Y.functional(coeffs)
    return z0, lam0


def _history_fields(report: solver.SolveReport) -> list[dict]:
    src = [r.total_err if r.total_err is not None else r.kkt.total
           for r in report.history]
    orders = dict(solver.observed_order_entries(src))
    rows = []
    for rec in report.history:
        rows.append({
            "k": rec.k,
            "rho": rec.rho,
            "kkt_stationarity": rec.kkt.stationarity,
            "kkt_feasibility": rec.kkt.feasibility,
            "kkt_polar": rec.kkt.polar_violation,
            "kkt_total": rec.kkt.total,
            "err_z": rec.err_z,
            "dist_lambda": rec.dist_lambda,
            "total_err": rec.total_err,
            "order": orders.get(rec.k),
        })
    return rows


def cmd_solve(cfg: RunConfig) -> int:
    bm = build_benchmark(cfg)
    opts = make_options(cfg)
    z0, lam0 = resolve_start(bm, cfg)
    try:
        report = solver.run(bm.problem, z0, lam0, opts, reference=bm.reference)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = _history_fields(report)
    if cfg.output == "json":
        payload = {
            "benchmark": bm.name,
            "status": report.status.value,
            "observed_orders": report.observed_orders,
            "gamma_hat": report.gamma_hat,
            "history": rows,
        }
        print(json.dumps(payload, indent=2))
    else:
        print(CSV_HEADER)
        for row in rows:
            print(",".join([
                str(row["k"]), fmt(row["rho"]), fmt(row["kkt_stationarity"]),
                fmt(row["kkt_feasibility"]), fmt(row["kkt_polar"]),
                fmt(row["kkt_total"]), fmt(row["err_z"]), fmt(row["dist_lambda"]),
                fmt(row["total_err"]), fmt(row["order"]),
            ]))
    if report.status is solver.SolveStatus.SUBPROBLEM_FAILURE:
        _log(f"subproblem failure at iteration {report.failure_index}: "
             f"{report.failure_message}")
    return _EXIT_BY_STATUS[report.status]


def _sweep_row(cfg: RunConfig, parameter: str, value: float) -> dict:
    row_cfg = RunConfig(**{**cfg.__dict__, "eigencontrol": dict(cfg.eigencontrol)})
    radius = None
    if parameter == "theta":
        row_cfg.rho_rule, row_cfg.theta = "proportional", value
    elif parameter == "rho_fixed":
        row_cfg.rho_rule, row_cfg.rho = "fixed", value
    elif parameter == "sigma1":
        row_cfg.sigma1 = value
    elif parameter == "start_radius":
        radius = value
    elif parameter == "n":
        if not row_cfg.benchmark.startswith("eigencontrol"):
            raise ConfigError("sweep over n applies to eigencontrol benchmarks")
        row_cfg.eigencontrol["n"] = int(value)
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    bm = build_benchmark(row_cfg)
    opts = make_options(row_cfg)
    z0, lam0 = resolve_start(bm, row_cfg, radius=radius)
    report = solver.run(bm.problem, z0, lam0, opts, reference=bm.reference)
    # orders whose stencils fit inside the last three steps of the run
    tail = report.observed_orders[-2:]
    return {
        "parameter": parameter,
        "value": value,
        "status": report.status.value,
        "iterations": len(report.history) - 1,
        "final_kkt_total": report.history[-1].kkt.total,
        "min_order": min(tail) if tail else None,
    }


def cmd_sweep(cfg: RunConfig, parameter: str, grid: list[float]) -> int:
    if not grid:
        raise ConfigError("sweep grid is empty")
    rows = [_sweep_row(cfg, parameter, value) for value in grid]
    if cfg.output == "json":
        print(json.dumps({"sweep": parameter, "rows": rows}, indent=2))
    else:
        print(SWEEP_HEADER)
        for row in rows:
            print(",".join([
                row["parameter"], fmt(row["value"]), row["status"],
                str(row["iterations"]), fmt(row["final_kkt_total"]),
                fmt(row["min_order"]),
            ]))
    return 0


def cmd_diagnose(cfg: RunConfig, rho_grid: list[float] | None = None) -> int:
    bm = build_benchmark(cfg)
    problem = bm.problem
    if bm.reference is not None:
        point = bm.reference.z_star
    else:
        point = problem.Z.zero_vector()
    if cfg.start_offset.strip() not in ("default", ""):
        offset = _parse_vector(cfg.start_offset)
        if offset.size != problem.Z.dim:
            raise ConfigError("point offset has the wrong dimension")
        point = problem.Z.vector(point.coords + offset)
    rep = diagnostics.degeneracy_report(problem, point)
    lam = (bm.reference.lambda_star if bm.reference is not None
           else problem.Y.zero_functional())
    H = problem.hess_L(point, lam)
    J = problem.jac_G(point)
    grid = rho_grid if rho_grid else _DIAGNOSE_RHO_GRID
    margins = [
        diagnostics.coercivity_margin(H, J, problem.Z.mass, problem.Y.mass, rho)
        for rho in grid
    ]
    if bm.reference is not None:
        rng = np.random.default_rng(cfg.seed)
        radius = 0.5 * bm.certified_radius
        samples = []
        for _ in range(100):
            dz = rng.standard_normal(problem.Z.dim)
            dz *= radius * rng.uniform(0.1, 1.0) / problem.Z.norm_arr(dz)
            dl = rng.standard_normal(problem.Y.dim)
            dln = problem.Y.dual_norm_arr(dl)
            dl *= radius * rng.uniform(0.1, 1.0) / dln
            samples.append((
                problem.Z.vector(bm.reference.z_star.coords + dz),
                problem.Y.functional(bm.reference.lambda_star.coeffs + dl),
            ))
        ratio = diagnostics.error_estimate_ratio(bm.reference, problem, samples)
        ratio_payload = {"value": ratio, "note": None}
    else:
        ratio_payload = {
            "value": None,
            "note": "no certified reference solution for this benchmark",
        }
    payload = {
        "benchmark": bm.name,
        "degeneracy": {
            "singular_values": list(rep.singular_values),
            "rank_tol": rep.rank_tol,
            "rcq_satisfied": rep.rcq_satisfied,
        },
        "coercivity": {"rho_grid": list(grid), "margins": margins},
        "error_estimate_ratio": ratio_payload,
        "notes": bm.notes,
    }
    print(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssqp",
        description="Stabilized SQP batch solver and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="INI configuration file")
        p.add_argument("--benchmark", default=None)
        p.add_argument("--rho-rule", dest="rho_rule", default=None,
                       choices=["proportional", "fixed", "oracle"])
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--rho", type=float, default=None)
        p.add_argument("--sigma0", type=float, default=None)
        p.add_argument("--sigma1", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
        p.add_argument("--start-offset", dest="start_offset", default=None)
        p.add_argument("--lambda0", default=None)
        p.add_argument("--output", default=None, choices=["csv", "json"])
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--q-d", dest="q_d", type=float, default=None)
        p.add_argument("--u-d-mode", dest="u_d_mode", type=int, default=None)
        p.add_argument("--u-d-amp", dest="u_d_amp", type=float, default=None)

    solve_p = sub.add_parser("solve", help="run one solve, emit iterate table")
    add_common(solve_p)

    sweep_p = sub.add_parser("sweep", help="grid sweep over one parameter")
    add_common(sweep_p)
    sweep_p.add_argument("--sweep", required=True,
                         choices=["theta", "rho_fixed", "sigma1",
                                  "start_radius", "n"])
    sweep_p.add_argument("--grid", required=True,
                         help="comma-separated grid values")

    diag_p = sub.add_parser("diagnose", help="degeneracy and coercivity report")
    add_common(diag_p)
    diag_p.add_argument("--grid", default=None,
                        help="rho grid for the coercivity margins")

    sub.add_parser("list", help="list registered benchmarks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        for name in bench.list_benchmarks():
            print(name)
        return 0
    try:
        cfg = apply_flags(load_config(args.config), args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            grid = [float(v) for v in args.grid.split(",") if v.strip()]
            return cmd_sweep(cfg, args.sweep, grid)
        if args.command == "diagnose":
            grid = None
            if args.grid:
                grid = [float(v) for v in args.grid.split(",") if v.strip()]
            return cmd_diagnose(cfg, grid)
    except (ValueError, KeyError) as exc:
        _log(f"error: {exc}")
        return 1
    raise AssertionError("unreachable command dispatch")


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
