"""Solve a navigation instance and report clearances along the final plan.

Writes the full result document (same JSON schema as the command line
front end) when --out is given.
"""

import argparse
import json
import time

import numpy as np

from safeqcqp import bench
from safeqcqp.cli import _trace_rows
from safeqcqp.solver import SolverConfig, ss_qcqp, ss_qcqp_as


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--agents", type=int, default=4)
    ap.add_argument("--horizon", type=int, default=40)
    ap.add_argument("--dmin", type=float, default=0.25)
    ap.add_argument("--variant", choices=["full", "active-set"], default="active-set")
    ap.add_argument("--epsilon", type=float, default=1e-5)
    ap.add_argument("--max-iter", type=int, default=5000)
    ap.add_argument("--out", help="write the JSON result document here")
    args = ap.parse_args()

    params = bench.NavigationParams(agents=args.agents, horizon=args.horizon,
                                    collision_radius=args.dmin)
    problem = bench.make_navigation_problem(params)
    x0 = bench.navigation_start(params)
    cfg = SolverConfig(epsilon=args.epsilon, max_iter=args.max_iter)
    run = ss_qcqp_as if args.variant == "active-set" else ss_qcqp

    print(f"nav: {args.agents} agents, horizon {args.horizon} "
          f"-> n={problem.n}, m={problem.m}")
    t0 = time.perf_counter()
    res = run(problem, x0, cfg)
    wall = time.perf_counter() - t0
    print(f"{args.variant}: {res.status} after {len(res.trace)} iterations, "
          f"{wall:.1f}s wall ({res.subproblem_ns / 1e9:.1f}s in subproblems)")
    print(f"objective {res.trace[0].f:.3f} -> {res.trace[-1].f:.3f}, "
          f"worst max_g {max(r.max_g for r in res.trace):.2e}, "
          f"kkt {res.final_kkt.max_component:.2e}")

    # clearance summary over the planned trajectories
    states = bench.unroll_dynamics(params, res.x_final)
    st = states.reshape(args.horizon, args.agents, 3)
    if args.agents > 1:
        from itertools import combinations
        worst_pair = min(
            float(np.linalg.norm(st[:, i, :2] - st[:, j, :2], axis=1).min())
            for i, j in combinations(range(args.agents), 2))
        print(f"closest agent pair {worst_pair:.4f} (required {args.dmin})")
    for (c, r) in params.obstacles:
        d = np.linalg.norm(st[:, :, :2] - np.asarray(c), axis=2).min()
        print(f"obstacle at {c}: closest approach {d:.4f} (radius {r})")

    if args.out:
        kkt = res.final_kkt
        document = {
            "problem": "nav", "variant": args.variant,
            "n": problem.n, "m": problem.m,
            "config": {"epsilon": args.epsilon, "max_iter": args.max_iter,
                       "agents": args.agents, "horizon": args.horizon,
                       "dmin": args.dmin},
            "status": res.status,
            "x_final": [float(v) for v in res.x_final],
            "kkt": {"stationarity": kkt.stationarity, "primal": kkt.primal,
                    "dual": kkt.dual, "complementarity": kkt.complementarity},
            "trace": _trace_rows(res),
            "subproblem_ns": int(res.subproblem_ns),
        }
        with open(args.out, "w") as fh:
            fh.write(json.dumps(document, indent=2) + "\n")
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
