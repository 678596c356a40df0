"""Run both solver variants on the small analytic problems and print a table."""

import argparse

import numpy as np

from safeqcqp import bench
from safeqcqp.solver import SolverConfig, qp_baseline, ss_qcqp, ss_qcqp_as

VARIANTS = {"full": ss_qcqp, "active-set": ss_qcqp_as, "qp-baseline": qp_baseline}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=1e-5)
    ap.add_argument("--max-iter", type=int, default=30000)
    args = ap.parse_args()

    header = f"{'problem':<16} {'variant':<11} {'status':<12} {'iters':>6} " \
             f"{'f_final':>14} {'gap':>10} {'worst_g':>10} {'kkt':>10}"
    print(header)
    print("-" * len(header))
    for key in ("ball-linear", "box-qp", "rosenbrock-ball"):
        problem, x0 = bench.get_problem(key)
        cfg = SolverConfig(epsilon=args.epsilon, max_iter=args.max_iter)
        for name, run in VARIANTS.items():
            res = run(problem, x0, cfg)
            gap = res.trace[-1].f - bench.KNOWN_OPTIMA[key]
            worst_g = max(r.max_g for r in res.trace)
            print(f"{key:<16} {name:<11} {res.status:<12} {len(res.trace):>6} "
                  f"{res.trace[-1].f:>14.6e} {gap:>10.1e} {worst_g:>10.1e} "
                  f"{res.final_kkt.max_component:>10.1e}")


if __name__ == "__main__":
    main()
