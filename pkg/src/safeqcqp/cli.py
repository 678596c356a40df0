"""Command line front end: run registered problems, export trace series.

Exit codes: 0 solved (converged or iteration cap), 2 usage error or unknown
problem, 3 infeasible start, 4 direction subproblem failure, 5 line search
failure, 6 flow integration failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields as dc_fields
from itertools import combinations

import numpy as np

from . import bench
from .flow import FlowBreachError, integrate_flow
from .problem import check_feasibility, kkt_residual
from .solver import InfeasibleStartError, SolverConfig, qp_baseline, ss_qcqp, ss_qcqp_as

TRACE_COLUMNS = ("k", "f", "max_g", "u_norm_sq", "step", "active_count",
                 "halvings", "wall_ns")
SERIES_NAMES = ("objective", "max_g", "min_u_sq_prefix", "active_count",
                "pairwise_distances")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE_START = 3
EXIT_SUBPROBLEM = 4
EXIT_LINESEARCH = 5
EXIT_FLOW = 6


@dataclass
class RunSpec:
    problem: str
    variant: str = "full"
    config_overrides: dict = field(default_factory=dict)
    problem_params: dict = field(default_factory=dict)
    flow_h: float = 1e-3
    flow_T: float = 1.0
    out: str | None = None
    fmt: str = "json"


def _trace_rows(result) -> list[dict]:
    rows = []
    for rec in result.trace:
        rows.append({
            "k": int(rec.k), "f": float(rec.f), "max_g": float(rec.max_g),
            "u_norm_sq": float(rec.u_norm_sq), "step": float(rec.step),
            "active_count": int(rec.active_count), "halvings": int(rec.halvings),
            "wall_ns": int(rec.wall_ns),
        })
    return rows


def _flow_rows(p, flow_trace, h: float) -> list[dict]:
    rows = []
    for j in range(flow_trace.times.size):
        x = flow_trace.states[j]
        max_g = float(np.max(p.constraints(x))) if p.m else float("-inf")
        rows.append({
            "k": j, "f": float(flow_trace.f_values[j]), "max_g": max_g,
            "u_norm_sq": float(flow_trace.u_norm_sq[j]), "step": float(h),
            "active_count": int(p.m), "halvings": 0, "wall_ns": 0,
        })
    return rows


def _write_csv(rows: list[dict], stream) -> None:
    stream.write(",".join(TRACE_COLUMNS) + "\n")
    for row in rows:
        cells = []
        for col in TRACE_COLUMNS:
            v = row[col]
            cells.append(str(v) if isinstance(v, int) else format(v, ".12g"))
        stream.write(",".join(cells) + "\n")


def _emit(document: dict, rows: list[dict], spec: RunSpec) -> None:
    if spec.fmt == "csv":
        if spec.out:
            with open(spec.out, "w") as fh:
                _write_csv(rows, fh)
        else:
            _write_csv(rows, sys.stdout)
        return
    text = json.dumps(document, indent=2)
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_solve(spec: RunSpec) -> int:
    """Run one solve (or flow integration) and write the result artifact."""
    try:
        problem, x0 = bench.get_problem(spec.problem, **spec.problem_params)
        cfg = SolverConfig(**spec.config_overrides)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    config_echo = {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)}
    config_echo.update(spec.problem_params)

    document = {
        "problem": spec.problem,
        "variant": spec.variant,
        "n": problem.n,
        "m": problem.m,
        "config": config_echo,
        "status": None,
        "x_final": None,
        "kkt": None,
        "trace": None,
    }

    if spec.variant == "flow":
        config_echo.update({"flow_h": spec.flow_h, "flow_T": spec.flow_T})
        report = check_feasibility(problem, x0, cfg.feas_tol)
        if not report.feasible:
            print(f"error: infeasible start (max violation {report.max_violation:.3e})",
                  file=sys.stderr)
            return EXIT_INFEASIBLE_START
        try:
            ftrace = integrate_flow(problem, x0, spec.flow_h, spec.flow_T, cfg)
        except (FlowBreachError, RuntimeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FLOW
        x_final = ftrace.states[-1]
        rows = _flow_rows(problem, ftrace, spec.flow_h)
        kkt = kkt_residual(problem, x_final, np.zeros(problem.m))
        document.update({
            "status": "completed",
            "x_final": [float(v) for v in x_final],
            "kkt": {"stationarity": kkt.stationarity, "primal": kkt.primal,
                    "dual": kkt.dual, "complementarity": kkt.complementarity},
            "trace": rows,
            "integral_half_u_sq": ftrace.integral_half_u_sq,
        })
        _emit(document, rows, spec)
        return EXIT_OK

    runner = {"full": ss_qcqp, "active-set": ss_qcqp_as, "qp-baseline": qp_baseline}
    if spec.variant not in runner:
        print(f"error: unknown variant {spec.variant!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = runner[spec.variant](problem, x0, cfg)
    except InfeasibleStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE_START

    rows = _trace_rows(result)
    kkt = result.final_kkt
    document.update({
        "status": result.status,
        "x_final": [float(v) for v in result.x_final],
        "kkt": {"stationarity": kkt.stationarity, "primal": kkt.primal,
                "dual": kkt.dual, "complementarity": kkt.complementarity},
        "trace": rows,
        "subproblem_ns": int(result.subproblem_ns),
    })
    _emit(document, rows, spec)
    if result.status in ("converged", "max_iter"):
        return EXIT_OK
    return EXIT_SUBPROBLEM if result.status == "subproblem_failure" else EXIT_LINESEARCH


def cmd_export(trace_path: str, series: str, out: str | None, fmt: str) -> int:
    """Extract one series from a saved result document."""
    if series not in SERIES_NAMES:
        print(f"error: unknown series {series!r}; available: {', '.join(SERIES_NAMES)}",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(trace_path) as fh:
            document = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read result document: {exc}", file=sys.stderr)
        return EXIT_USAGE
    trace = document.get("trace") or []

    if series == "pairwise_distances":
        if document.get("problem") != "nav":
            print("error: pairwise_distances requires a nav result", file=sys.stderr)
            return EXIT_USAGE
        cfgd = document.get("config", {})
        params = bench.NavigationParams(
            agents=int(cfgd.get("agents", 4)),
            horizon=int(cfgd.get("horizon", 40)),
            collision_radius=float(cfgd.get("dmin", 0.25)))
        X = bench.unroll_dynamics(params, np.asarray(document["x_final"], dtype=float))
        st = X.reshape(params.horizon, params.agents, 3)
        columns = {}
        for i, j in combinations(range(params.agents), 2):
            d = np.linalg.norm(st[:, i, :2] - st[:, j, :2], axis=1)
            columns[f"pair_{i}_{j}"] = [float(v) for v in d]
    elif series == "min_u_sq_prefix":
        vals = [row["u_norm_sq"] for row in trace]
        columns = {series: [float(v) for v in np.minimum.accumulate(vals)] if vals else []}
    else:
        key = {"objective": "f", "max_g": "max_g", "active_count": "active_count"}[series]
        columns = {series: [row[key] for row in trace]}

    if fmt == "json":
        text = json.dumps(columns, indent=2) + "\n"
        if out:
            with open(out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    names = list(columns)
    length = len(next(iter(columns.values()))) if columns else 0
    lines = ["k," + ",".join(names)]
    for r in range(length):
        cells = [str(r)]
        for name in names:
            v = columns[name][r]
            cells.append(str(v) if isinstance(v, int) else format(v, ".12g"))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeqcqp",
        description="Anytime-feasible first-order solver for smooth "
                    "inequality-constrained programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run a solver variant on a registered problem")
    ps.add_argument("--problem", required=True,
                    help=f"one of: {', '.join(bench.PROBLEM_KEYS)}")
    ps.add_argument("--variant", default="full",
                    choices=["full", "active-set", "flow", "qp-baseline"])
    ps.add_argument("--alpha", type=float)
    ps.add_argument("--gamma", type=float)
    ps.add_argument("--w-floor", type=float, dest="w_floor")
    ps.add_argument("--epsilon", type=float)
    ps.add_argument("--delta", type=float)
    ps.add_argument("--q-percent", type=float, dest="q_percent")
    ps.add_argument("--max-iter", type=int, dest="max_iter")
    ps.add_argument("--agents", type=int)
    ps.add_argument("--horizon", type=int)
    ps.add_argument("--dmin", type=float)
    ps.add_argument("--flow-h", type=float, dest="flow_h", default=1e-3)
    ps.add_argument("--flow-T", type=float, dest="flow_T", default=1.0)
    ps.add_argument("--out", help="output path (stdout when omitted)")
    ps.add_argument("--format", choices=["json", "csv"], default="json")

    pe = sub.add_parser("export", help="extract one series from a result document")
    pe.add_argument("--trace", required=True, help="path of a JSON result document")
    pe.add_argument("--series", required=True,
                    help=f"one of: {', '.join(SERIES_NAMES)}")
    pe.add_argument("--out", help="output path (stdout when omitted)")
    pe.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "export":
        return cmd_export(args.trace, args.series, args.out, args.format)

    overrides = {}
    for name in ("alpha", "gamma", "w_floor", "epsilon", "delta", "q_percent",
                 "max_iter"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    problem_params = {}
    if args.problem == "nav":
        for name in ("agents", "horizon", "dmin"):
            value = getattr(args, name)
            if value is not None:
                problem_params[name] = value
    elif any(getattr(args, name) is not None for name in ("agents", "horizon", "dmin")):
        print("error: --agents/--horizon/--dmin apply only to the nav problem",
              file=sys.stderr)
        return EXIT_USAGE
    spec = RunSpec(problem=args.problem, variant=args.variant,
                   config_overrides=overrides, problem_params=problem_params,
                   flow_h=args.flow_h, flow_T=args.flow_T,
                   out=args.out, fmt=args.format)
    return cmd_solve(spec)


if __name__ == "__main__":
    sys.exit(main())
