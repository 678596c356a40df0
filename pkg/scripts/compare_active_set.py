"""Head-to-head of the full and screened variants on one navigation instance."""

import argparse

import numpy as np

from safeqcqp import bench
from safeqcqp.solver import SolverConfig, ss_qcqp, ss_qcqp_as


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--agents", type=int, default=2)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--max-iter", type=int, default=3000)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--q-percent", type=float, default=5.0)
    args = ap.parse_args()

    problem, x0 = bench.get_problem("nav", agents=args.agents,
                                    horizon=args.horizon)
    cfg = SolverConfig(max_iter=args.max_iter, delta=args.delta,
                       q_percent=args.q_percent)
    print(f"nav {args.agents}x{args.horizon}: n={problem.n}, m={problem.m}, "
          f"delta={args.delta}, q={args.q_percent}%")

    full = ss_qcqp(problem, x0, cfg)
    scr = ss_qcqp_as(problem, x0, cfg)

    for name, res in (("full", full), ("active-set", scr)):
        mean_active = float(np.mean([r.active_count for r in res.trace]))
        print(f"{name:<11} {res.status:<10} iters {len(res.trace):>5}  "
              f"f {res.trace[-1].f:.6f}  mean rows {mean_active:7.1f} "
              f"({mean_active / problem.m:.1%})  "
              f"subproblem {res.subproblem_ns / 1e9:6.2f}s  "
              f"kkt {res.final_kkt.max_component:.1e}")

    drift = float(np.abs(full.x_final - scr.x_final).max())
    speedup = full.subproblem_ns / max(scr.subproblem_ns, 1)
    print(f"iterate agreement {drift:.2e}, subproblem speedup {speedup:.2f}x")


if __name__ == "__main__":
    main()
