"""Command-line interface: configuration ingestion, dispatch, artifact emission.

Subcommands: validate, care, static, solve, turnpike-check, rhc, sweep,
infinite.  All artifacts are written atomically; float output uses 17
significant digits so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import io as tio
from .errors import ConfigError, ToolkitError
from .model import Grid, ProblemData, validate_problem
from .lq import SegmentProblem, solve_lq
from .riccati import riccati_flow, solve_care, stationary_flow_matrix
from .turnpike import deviation_profile, solve_static, turnpike_check
from .rhc import (
    RhcConfig,
    TerminalCostSpec,
    bound_inputs,
    default_iterations,
    default_jobs,
    predicted_bound,
    rho_statistic,
    run_rhc_finite,
    run_rhc_infinite,
    sweep,
)

USAGE_EXIT = 2
SOLVER_EXIT = 1


@dataclass
class RunConfig:
    """Fully-resolved invocation: problem, command, command options."""

    command: str
    problem_path: str
    h: float
    options: dict = field(default_factory=dict)
    data: Optional[ProblemData] = None


def parse_value_list(text: str):
    """Parse 'start:stop:step' (inclusive, 1e-9 snapping) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}: {exc}") from exc
        if step <= 0.0:
            raise ConfigError("range step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ConfigError(f"empty range {text!r}")
        return [start + i * step for i in range(count)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turnpike-rhc",
        description="Linear-quadratic receding-horizon control toolkit",
    )
    parser.add_argument("--h", type=float, default=None,
                        help="time step (default: problem file value or 5e-3)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("problem", help="problem JSON file")
        return p

    add("validate", help="check problem invariants")

    p = add("care", help="solve the algebraic Riccati equation")
    p.add_argument("--json", action="store_true", dest="as_json")

    add("static", help="solve the steady-state problem")

    p = add("solve", help="solve the full-horizon problem")
    p.add_argument("--out-traj", default="trajectory.csv")
    p.add_argument("--out-summary", default="summary.json")

    p = add("turnpike-check", help="fit the turnpike envelope to the optimal trajectory")
    p.add_argument("--out-report", default="turnpike_report.json")
    p.add_argument("--out-profile", default="turnpike_profile.csv")

    def rhc_common(p):
        p.add_argument("--tau", type=float, required=True)
        p.add_argument("--T", type=float, required=True, dest="T")
        p.add_argument("--N", type=int, default=None)
        p.add_argument("--mode", choices=("zero", "constant", "exact"), default="zero")
        p.add_argument("--p-tilde", default="pstar",
                       help="pstar, zero, or a JSON vector file")
        p.add_argument("--pi-tilde", default="stationary",
                       help="constant mode: stationary, zero, or a JSON matrix file")

    p = add("rhc", help="finite-horizon receding-horizon run")
    rhc_common(p)
    p.add_argument("--out-traj", default="rhc_trajectory.csv")
    p.add_argument("--out-summary", default="rhc_summary.json")

    p = add("sweep", help="grid of receding-horizon runs")
    rhc_common(p)
    p.add_argument("--tau-list", required=True)
    p.add_argument("--T-list", required=True, dest="T_list")
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--figures", action="store_true",
                   help="also emit error and 100*rho matrices as CSV")

    p = add("infinite", help="infinite-horizon receding-horizon run")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--T", type=float, required=True, dest="T")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--T-end", type=float, required=True, dest="T_end")
    p.add_argument("--p-hat", default="pstar", help="pstar or a JSON vector file")
    p.add_argument("--pi-hat", default="stationary",
                   help="stationary or a JSON matrix file")
    p.add_argument("--out-traj", default="infinite_trajectory.csv")
    p.add_argument("--out-summary", default="infinite_summary.json")
    return parser


def parse_config(argv) -> RunConfig:
    """Parse argv into a fully-resolved RunConfig (problem file loaded)."""
    ns = _build_parser().parse_args(argv)
    data, file_h = tio.read_problem(ns.problem)
    h = ns.h if ns.h is not None else file_h
    if h <= 0.0:
        raise ConfigError("h must be positive")
    options = {k: v for k, v in vars(ns).items()
               if k not in ("command", "problem", "h")}
    for key in ("tau", "T", "T_end"):
        if options.get(key) is not None and options[key] <= 0.0:
            raise ConfigError(f"{key} must be positive")
    if options.get("jobs") is None and "jobs" in options:
        options["jobs"] = default_jobs()
    if options.get("jobs") is not None and options["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    return RunConfig(command=ns.command, problem_path=ns.problem, h=h,
                     options=options, data=data)


def _load_vector(name: str, n: int, p_star: np.ndarray) -> np.ndarray:
    if name == "pstar":
        return p_star
    if name == "zero":
        return np.zeros(n)
    with open(name, "r", encoding="utf-8") as fh:
        v = np.asarray(json.load(fh), dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"vector in {name} must have length {n}")
    return v


def _load_matrix(name: str, n: int, data: ProblemData, h: float) -> np.ndarray:
    if name == "stationary":
        return stationary_flow_matrix(data, h)
    if name == "zero":
        return np.zeros((n, n))
    with open(name, "r", encoding="utf-8") as fh:
        M = np.asarray(json.load(fh), dtype=float)
    if M.shape != (n, n):
        raise ConfigError(f"matrix in {name} must be {n}x{n}")
    return M


def _terminal_spec(opts: dict, data: ProblemData, h: float,
                   p_star: np.ndarray) -> TerminalCostSpec:
    mode = opts["mode"]
    if mode == "exact":
        return TerminalCostSpec.exact()
    p_tilde = _load_vector(opts["p_tilde"], data.n, p_star)
    if mode == "zero":
        return TerminalCostSpec.zero(p_tilde)
    pi_tilde = _load_matrix(opts["pi_tilde"], data.n, data, h)
    return TerminalCostSpec.constant(pi_tilde, p_tilde)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def run(cfg: RunConfig) -> int:
    """Execute one parsed configuration; returns the process exit status."""
    data, h = cfg.data, cfg.h
    opts = cfg.options

    if cfg.command == "validate":
        report = validate_problem(data)
        if report.ok:
            print("ok")
            return 0
        for v in report.violations:
            print(f"violated: {v}")
        return SOLVER_EXIT

    if cfg.command == "care":
        care = solve_care(data)
        eigs = np.linalg.eigvals(care.A_pi)
        if opts.get("as_json"):
            doc = {"Pi": care.Pi.tolist(), "lambda": care.lam,
                   "eig_A_pi": [[e.real, e.imag] for e in eigs]}
            print(_json_text(doc), end="")
        else:
            print("Pi =")
            for row in care.Pi:
                print("  " + "  ".join(tio.fmt(v) for v in row))
            print(f"lambda = {tio.fmt(care.lam)}")
            print("eig(A_pi) = " + ", ".join(f"{e.real:+.6g}{e.imag:+.6g}j" for e in eigs))
        return 0

    care = solve_care(data)
    steady = solve_static(data, care)

    if cfg.command == "static":
        doc = {"y_star": steady.y_star.tolist(), "u_star": steady.u_star.tolist(),
               "p_star": steady.p_star.tolist(), "v_star": steady.v_star,
               "q_tilde": steady.q_tilde.tolist()}
        print(_json_text(doc), end="")
        return 0

    grid = Grid.span(0.0, data.T_bar, h)

    if cfg.command == "solve":
        sol = solve_lq(SegmentProblem(data=data, y_init=data.y0, Qterm=data.Q,
                                      qterm=data.q, grid=grid))
        tio.write_trajectory(opts["out_traj"], sol.traj)
        tio.atomic_write(opts["out_summary"],
                         _json_text({"value": sol.value,
                                     "kkt_residual": sol.kkt_residual}))
        print(f"value = {tio.fmt(sol.value)}")
        return 0

    if cfg.command == "turnpike-check":
        sol = solve_lq(SegmentProblem(data=data, y_init=data.y0, Qterm=data.Q,
                                      qterm=data.q, grid=grid))
        report = turnpike_check(sol.traj, steady, care.lam)
        t, dev_y, dev_p, dev, env = deviation_profile(sol.traj, steady, care.lam)
        doc = {"fitted_M": report.fitted_M, "left_rate": report.left_rate,
               "right_rate": report.right_rate,
               "left_residual": report.left_residual,
               "right_residual": report.right_residual,
               "max_mid_deviation": report.max_mid_deviation,
               "degenerate": report.degenerate, "lambda": care.lam}
        tio.atomic_write(opts["out_report"], _json_text(doc))
        lines = ["t,dev_y,dev_p,dev,envelope"]
        for k in range(t.size):
            lines.append(",".join(tio.fmt(v) for v in
                                  (t[k], dev_y[k], dev_p[k], dev[k], env[k])))
        tio.atomic_write(opts["out_profile"], "\n".join(lines) + "\n")
        print(f"fitted_M = {tio.fmt(report.fitted_M)}")
        return 0

    if cfg.command == "rhc":
        terminal = _terminal_spec(opts, data, h, steady.p_star)
        N = opts["N"]
        if N is None:
            N = default_iterations(data.T_bar, opts["tau"], opts["T"])
        rcfg = RhcConfig(tau=opts["tau"], T=opts["T"], N=N, terminal=terminal, h=h)
        result = run_rhc_finite(data, steady, care, rcfg)
        rho = (rho_statistic(result.error_u, rcfg.tau, rcfg.T, care.lam)
               if result.error_u > 0.0 else None)
        bound = predicted_bound(rcfg, steady, care,
                                bound_inputs(terminal, data, steady, care, h, rcfg.T))
        tio.write_trajectory(opts["out_traj"], result.traj)
        tio.atomic_write(opts["out_summary"], _json_text({
            "tau": rcfg.tau, "T": rcfg.T, "N": N,
            "error_u": result.error_u, "error_y": result.error_y,
            "cost_gap": result.cost_gap, "rho": rho, "predicted_bound": bound,
        }))
        print(f"error_u = {tio.fmt(result.error_u)}")
        return 0

    if cfg.command == "sweep":
        terminal = _terminal_spec(opts, data, h, steady.p_star)
        tau_list = parse_value_list(opts["tau_list"])
        T_list = parse_value_list(opts["T_list"])
        rows = sweep(data, steady, care, tau_list, T_list, h, terminal,
                     jobs=opts["jobs"], N_override=opts["N"])
        tio.atomic_write(opts["out"], tio.sweep_csv(rows))
        if opts.get("figures"):
            stem, _ = os.path.splitext(opts["out"])
            tio.atomic_write(stem + "_error_matrix.csv",
                             tio.matrix_csv(rows, "error_u", tau_list, T_list))
            rho_rows = [r if r.rho is None else replace(r, rho=100.0 * r.rho)
                        for r in rows]
            tio.atomic_write(stem + "_rho_matrix.csv",
                             tio.matrix_csv(rho_rows, "rho", tau_list, T_list,
                                            round_to_int=True))
        ok = sum(1 for r in rows if r.status == "ok")
        print(f"{ok} of {len(rows)} cells solved -> {opts['out']}")
        return 0

    if cfg.command == "infinite":
        n = data.n
        p_hat = _load_vector(opts["p_hat"], n, steady.p_star)
        pi_hat = _load_matrix(opts["pi_hat"], n, data, h)
        terminal = TerminalCostSpec.constant(pi_hat, p_hat)
        rcfg = RhcConfig(tau=opts["tau"], T=opts["T"], N=opts["N"],
                         terminal=terminal, h=h)
        result = run_rhc_infinite(data, steady, care, rcfg, opts["T_end"])
        tio.write_trajectory(opts["out_traj"], result.traj)
        tio.atomic_write(opts["out_summary"], _json_text({
            "tau": rcfg.tau, "T": rcfg.T, "N": rcfg.N,
            "error_u": result.error_u, "error_y": result.error_y,
            "cost_gap": result.cost_gap,
        }))
        print(f"error_u = {tio.fmt(result.error_u)}")
        return 0

    raise ConfigError(f"unknown command {cfg.command!r}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return run(cfg)
    except ToolkitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return SOLVER_EXIT


if __name__ == "__main__":
    sys.exit(main())
