"""Command-line front end.

Exit codes: 0 success, 1 domain failure (invalid model, failed certificate,
non-convergence, failed comparison, inadmissible policy), 2 environment
failure (missing file, unreadable or malformed JSON).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bench_models
from .envelope import is_grid_lsc
from .errors import HowardError, ModelParseError, ModelSchemaError, ModelValidationError
from .lyapunov import certify_growth, check_weight_continuity, w_norm
from .model import (
    ModelSpec,
    dumps_model,
    dumps_policy,
    ensure_valid,
    load_policy,
    model_from_dict,
    validate_model,
)
from .montecarlo import estimate_value
from .operators import apply_Tf, bellman_T, evaluate_policy
from .solvers import (
    TOLERANCE,
    best_improvement_pi,
    check_descent_chain,
    rate_report,
    smoothed_policy_iteration,
    trace_to_csv,
    trace_to_json,
    value_iteration,
)

log = logging.getLogger("howard_lsc")

EXIT_OK, EXIT_DOMAIN, EXIT_ENV = 0, 1, 2


class EnvFailure(Exception):
    pass


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=1) + "\n")


def _say(msg: str) -> None:
    sys.stderr.write(msg + "\n")


def _read_json(path: str):
    try:
        with open(path, "rb") as fh:
            return json.load(fh)
    except OSError as exc:
        raise EnvFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EnvFailure(f"{path}: malformed JSON: {exc}") from exc


def _read_model(path: str, alpha=None) -> ModelSpec:
    try:
        m = model_from_dict(_read_json(path))
    except ModelSchemaError as exc:
        raise EnvFailure(f"{path}: {exc}") from exc
    return m if alpha is None else m.with_alpha(alpha)


def _read_policy(path: str):
    try:
        return load_policy(path)
    except OSError as exc:
        raise EnvFailure(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (ModelParseError, ModelSchemaError) as exc:
        raise EnvFailure(f"{path}: {exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise EnvFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def _check_policy(m: ModelSpec, f) -> None:
    if not m.is_admissible(f):
        raise HowardError("policy is not admissible for this model")


# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    m = _read_model(args.model, args.alpha)
    violations = validate_model(m)
    report = {"model": args.model, "valid": not violations, "violations": [v.to_dict() for v in violations]}
    ok = not violations
    if violations:
        for v in violations:
            _say(f"violation: {v}")
    else:
        cert = certify_growth(m)
        report["certificate"] = cert.to_dict()
        if not cert.passed:
            ok = False
            _say(f"gamma >= 1: gamma={cert.gamma!r} (beta={cert.beta!r} at {cert.witness_beta})")
        cc = check_weight_continuity(m)
        report["weight_continuity"] = [v.to_dict() for v in cc]
        for v in cc:
            _say(("error" if args.strict_cc else "warning") + f": W not grid-continuous: {v}")
        if cc and args.strict_cc:
            ok = False
    report["ok"] = ok
    _say(f"{args.model}: {'OK' if ok else 'FAILED'}")
    _emit(report)
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_certify(args) -> int:
    m = ensure_valid(_read_model(args.model, args.alpha))
    cert = certify_growth(m)
    if not cert.passed:
        _say("gamma >= 1")
    _emit(cert.to_dict())
    return EXIT_OK if cert.passed else EXIT_DOMAIN


def cmd_gen(args) -> int:
    name = args.generator
    if name == "threshold":
        m = bench_models.make_threshold_model(args.n_cells, args.jump, args.alpha)
    elif name == "inventory":
        demand = None if args.demand_probs is None else [float(p) for p in args.demand_probs.split(",")]
        m = bench_models.make_inventory_model(
            args.capacity, demand, args.order_cost, args.holding_cost, args.alpha,
            shortage_cost=args.shortage_cost, weight_scale=args.weight_scale,
        )
    elif name == "queueing":
        m = bench_models.make_queueing_model(
            args.buffer, args.arrival_p, args.service_p, args.reject_cost, args.hold_cost, args.alpha,
            weight_scale=args.weight_scale,
        )
    else:
        m = bench_models.make_random_finite_mdp(args.n_states, args.n_actions, args.sparsity, args.seed, args.alpha)
    text = dumps_model(m)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(args.output, text)
        _say(f"wrote {args.output} ({m.n_states} nodes)")
    return EXIT_OK


def _trace_out(trace, path: str) -> None:
    _write(path, trace_to_json(trace) if path.endswith(".json") else trace_to_csv(trace))


def cmd_solve(args) -> int:
    m = ensure_valid(_read_model(args.model, args.alpha))
    cert = certify_growth(m)
    if not cert.passed:
        raise HowardError(f"gamma >= 1 (gamma={cert.gamma!r})")
    f0 = _read_policy(args.f0) if args.f0 else None
    if f0 is not None:
        _check_policy(m, f0)
    v_star = None
    if args.compare:
        v_star, _, _ = value_iteration(m, args.tol / 10)

    summary: dict = {"algorithm": args.algorithm, "tol": args.tol, "gamma": cert.gamma}
    trace = None
    if args.algorithm == "vi":
        value, policy, k = value_iteration(m, args.tol)
        summary.update(iterations=k, terminated_by=TOLERANCE)
    elif args.algorithm == "pi":
        trace, policy = smoothed_policy_iteration(m, f0, args.eval_method, args.tol, args.max_iter, v_star=v_star)
        value = trace.final_value
        summary.update(iterations=trace.n_iter, terminated_by=trace.terminated_by)
    else:
        trace, policy = best_improvement_pi(m, f0, args.epsilon, args.tol, args.max_iter, v_star=v_star)
        value = trace.final_value
        summary.update(iterations=trace.n_iter, terminated_by=trace.terminated_by, epsilon=args.epsilon)
    summary["policy"] = list(policy.actions)
    summary["value"] = value.tolist()
    ok = summary["terminated_by"] != "max_iter"

    if args.compare:
        gap = w_norm(value - v_star, m)
        summary["wnorm_gap"] = gap
        summary["gap_ok"] = gap <= 2 * args.tol
        ok = ok and summary["gap_ok"]
        t_star, _ = bellman_T(m, v_star)

        summary["optimality_residual"] = w_norm(apply_Tf(m, policy, v_star) - t_star, m)
        if args.algorithm == "pi":
            violations = check_descent_chain(trace)
            rep = rate_report(trace, v_star, m, oracle_tol=args.tol / 10)
            summary.update(
                descent_chain_ok=not violations,
                chain_violations=len(violations),
                max_rate_ratio=rep.max_ratio,
                rate_ok=rep.ok,
                lsc_check=all(r.lsc_check for r in trace.records),
            )
        elif args.algorithm == "pi-best":
            ratios = [r.rate_ratio for r in trace.records if r.rate_ratio is not None]
            summary.update(
                descent_chain_ok=all(r.monotone_ok for r in trace.records),
                max_rate_ratio=max(ratios) if ratios else None,
            )
        _say(f"gap to VI: {gap:.3e} (limit {2 * args.tol:.1e}), gamma={cert.gamma:.6g}")
        if summary.get("max_rate_ratio") is not None:
            _say(f"max rate ratio: {summary['max_rate_ratio']:.6g}")

    if args.trace_out:
        if trace is None:
            _say("note: --trace-out ignored for value iteration")
        else:
            _trace_out(trace, args.trace_out)
    if args.policy_out:
        _write(args.policy_out, dumps_policy(policy))
    summary["ok"] = ok
    _say(f"{args.algorithm}: {summary['terminated_by']} after {summary['iterations']} iterations")
    _emit(summary)
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_eval(args) -> int:
    m = ensure_valid(_read_model(args.model, args.alpha))
    f = _read_policy(args.policy)
    _check_policy(m, f)
    v = evaluate_policy(m, f, args.method, args.tol)
    _emit({"value": v.tolist(), "wnorm": w_norm(v, m), "grid_lsc": is_grid_lsc(m, v)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = ensure_valid(_read_model(args.model))
    f = _read_policy(args.policy)
    _check_policy(m, f)
    if not 0 <= args.x0 < m.n_states:
        raise HowardError(f"x0={args.x0} is not a node of the model")
    est = estimate_value(m, f, args.x0, args.n_traj, args.horizon, args.seed)
    _emit(est.to_dict())
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="howard-lsc", description="Smoothed policy iteration for discounted MDPs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check model invariants and the growth certificate")
    s.add_argument("model")
    s.add_argument("--strict-cc", action="store_true", help="fail when W is not grid-continuous")
    s.add_argument("--alpha", type=float, help="override the model's discount factor")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("certify", help="print the growth certificate")
    s.add_argument("model")
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("gen", help="write a benchmark model")
    gsub = s.add_subparsers(dest="generator", required=True)
    for name in bench_models.GENERATORS:
        g = gsub.add_parser(name)
        g.add_argument("-o", "--output", help="output path ('-' or omitted: stdout)")
        g.add_argument("--alpha", type=float, default=0.9)
        if name == "threshold":
            g.add_argument("--n-cells", type=int, default=21)
            g.add_argument("--jump", type=float, default=1.0)
        elif name == "inventory":
            g.add_argument("--capacity", type=int, default=20)
            g.add_argument("--demand-probs", help="comma-separated pmf of demand 0, 1, 2, ...")
            g.add_argument("--order-cost", type=float, default=1.0)
            g.add_argument("--holding-cost", type=float, default=0.5)
            g.add_argument("--shortage-cost", type=float, default=2.0)
            g.add_argument("--weight-scale", type=float, default=0.005)
        elif name == "queueing":
            g.add_argument("--buffer", type=int, default=10)
            g.add_argument("--arrival-p", type=float, default=0.1)
            g.add_argument("--service-p", type=float, default=0.3)
            g.add_argument("--reject-cost", type=float, default=5.0)
            g.add_argument("--hold-cost", type=float, default=1.0)
            g.add_argument("--weight-scale", type=float, default=1.0)
        else:
            g.add_argument("--n-states", type=int, default=20)
            g.add_argument("--n-actions", type=int, default=3)
            g.add_argument("--sparsity", type=int, default=3)
            g.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run value iteration or (best-improvement) policy iteration")
    s.add_argument("model")
    s.add_argument("--algorithm", choices=("vi", "pi", "pi-best"), default="pi")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--epsilon", type=float, default=1e-9)
    s.add_argument("--f0", help="initial policy file (JSON array of action ids)")
    s.add_argument("--trace-out", help="trace file; .json for full functions, otherwise CSV")
    s.add_argument("--policy-out", help="write the returned policy here")
    s.add_argument("--compare", action="store_true", help="check against value iteration")
    s.add_argument("--eval-method", choices=("direct", "iterative"))
    s.add_argument("--max-iter", type=int, default=10**4)
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="evaluate a stationary policy")
    s.add_argument("model")
    s.add_argument("policy")
    s.add_argument("--method", choices=("direct", "iterative"))
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="Monte Carlo estimate of a policy value")
    s.add_argument("model")
    s.add_argument("policy")
    s.add_argument("--x0", type=int, default=0)
    s.add_argument("--n-traj", type=int, default=10_000)
    s.add_argument("--horizon", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ENV if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except EnvFailure as exc:
        _say(f"error: {exc}")
        return EXIT_ENV
    except ModelValidationError as exc:
        for v in exc.violations:
            _say(f"violation: {v}")
        return EXIT_DOMAIN
    except (HowardError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
