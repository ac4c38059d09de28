"""Solve every benchmark family with VI, smoothed PI and best-improvement PI.

Prints one row per (family, alpha) with iteration counts, the W-norm gap to the
VI oracle, the largest observed rate ratio and the certificate gamma.  With
--trace-dir, writes a CSV trace per smoothed-PI run for plotting.
"""

import argparse
import os
import time

from howard_lsc import bench_models
from howard_lsc.lyapunov import certify_growth, w_norm
from howard_lsc.solvers import (
    best_improvement_pi,
    check_descent_chain,
    rate_report,
    smoothed_policy_iteration,
    trace_to_csv,
    value_iteration,
)


def build(name, alpha):
    if name == "inventory":
        return bench_models.make_inventory_model(alpha=alpha, weight_scale=0.001)
    if name == "queueing":
        return bench_models.make_queueing_model(alpha=alpha, weight_scale=0.5)
    return bench_models.GENERATORS[name](alpha=alpha)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.5, 0.9, 0.95])
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--trace-dir")
    args = ap.parse_args()

    header = f"{'family':10s} {'alpha':>5s} {'N':>4s} {'gamma':>7s} {'VI':>5s} {'PI':>3s} {'BI':>3s} {'gap':>9s} {'max ratio':>9s} chain  secs"
    print(header)
    print("-" * len(header))
    for name in bench_models.GENERATORS:
        for alpha in args.alphas:
            m = build(name, alpha)
            cert = certify_growth(m)
            if not cert.passed:
                print(f"{name:10s} {alpha:5.2f}  skipped: gamma={cert.gamma:.4f} >= 1")
                continue
            t0 = time.perf_counter()
            v_star, _, k = value_iteration(m, args.tol / 10)
            trace, _ = smoothed_policy_iteration(m, tol=args.tol, v_star=v_star)
            bi, _ = best_improvement_pi(m, tol=args.tol)
            rep = rate_report(trace, v_star, m, oracle_tol=args.tol / 10)
            chain = "ok" if not check_descent_chain(trace) else "FAIL"
            gap = w_norm(trace.final_value - v_star, m)
            ratio = "n/a" if rep.max_ratio is None else f"{rep.max_ratio:.4f}"
            secs = time.perf_counter() - t0
            print(
                f"{name:10s} {alpha:5.2f} {m.n_states:4d} {cert.gamma:7.4f} {k:5d} {trace.n_iter:3d} "
                f"{bi.n_iter:3d} {gap:9.2e} {ratio:>9s} {chain:5s} {secs:5.2f}"
            )
            if args.trace_dir:
                os.makedirs(args.trace_dir, exist_ok=True)
                path = os.path.join(args.trace_dir, f"{name}_a{alpha:g}.csv")
                with open(path, "w") as fh:
                    fh.write(trace_to_csv(trace))


if __name__ == "__main__":
    main()
