"""Value iteration, smoothed policy iteration and best-improvement policy iteration.

Smoothed PI alternates three steps: evaluate the current policy exactly,
replace the value by its lower semicontinuous envelope, then improve greedily
against the envelope.  Best-improvement PI replaces the greedy step by solving
the MDP restricted to the greedy argmin sets, which picks the improvement
policy with the smallest value among all greedy ones.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .envelope import is_grid_lsc, lsc_envelope
from .errors import ConvergenceError
from .lyapunov import require_certificate, w_norm
from .model import ArgminSets, ModelSpec, Policy, restrict_actions
from .operators import _greedy, apply_L, bellman_T, evaluate_policy

PI_MAX_ITER = 10**4
VI_MAX_ITER = 10**6
CHAIN_TOL = 1e-10
LSC_TOL = 1e-10
RATIO_MIN_DENOM = 1e-13

FIXED_POINT = "fixed_point"
MAX_ITER = "max_iter"
TOLERANCE = "tolerance"


# --------------------------------------------------------------------------
# Value iteration
# --------------------------------------------------------------------------


def value_iteration(
    m: ModelSpec, tol: float = 1e-9, max_iter: int = VI_MAX_ITER, u0=None
) -> tuple[np.ndarray, Policy, int]:
    """Iterate T from u0 (default 0) until gamma/(1-gamma) ||u_k - u_{k-1}||_W <= tol.

    Returns (u, greedy policy of u, k); ||u - V*||_W <= tol on return.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = require_certificate(m).gamma
    factor = gamma / (1.0 - gamma)
    u = np.zeros(m.n_states) if u0 is None else np.array(u0, dtype=float)
    for k in range(1, max_iter + 1):
        u_new, _ = bellman_T(m, u)
        if factor * w_norm(u_new - u, m) <= tol:
            _, f = bellman_T(m, u_new)
            return u_new, f, k
        u = u_new
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations")


# --------------------------------------------------------------------------
# Smoothed policy iteration
# --------------------------------------------------------------------------


@dataclass
class PiRecord:
    n: int
    v: np.ndarray            # v_n = V_{f_n}
    v_e: np.ndarray          # envelope of v_n
    t_v_e: np.ndarray        # T applied to the envelope
    policy: Policy           # f_n
    next_policy: Policy      # f_{n+1}, greedy for v_e
    chain_ok: bool
    lsc_check: bool
    gap_to_opt: Optional[float] = None
    rate_ratio: Optional[float] = None


@dataclass
class PiTrace:
    records: list[PiRecord]
    terminated_by: str
    final_value: np.ndarray
    final_policy: Policy
    weight: np.ndarray
    gamma: float
    final_value_e: Optional[np.ndarray] = None
    v_star: Optional[np.ndarray] = None

    @property
    def n_iter(self) -> int:
        return len(self.records)

    def values(self) -> list[np.ndarray]:
        """Iterates v_0..v_K followed by the final value, unless it repeats v_K exactly."""
        vs = [r.v for r in self.records]
        if not vs or not np.array_equal(vs[-1], self.final_value):
            vs.append(self.final_value)
        return vs

    def attach_oracle(self, v_star) -> "PiTrace":
        """Fill gap_to_opt and rate_ratio against a reference optimal value."""
        v_star = np.asarray(v_star, dtype=float)
        self.v_star = v_star
        nxt = [r.v for r in self.records[1:]] + [self.final_value]
        for rec, v_next in zip(self.records, nxt):
            rec.gap_to_opt = _wgap(rec.v, v_star, self.weight)
            rec.rate_ratio = _ratio(rec.v, v_next, v_star, self.weight)
        return self

    def to_rows(self) -> list[dict]:
        rows = []
        for i, rec in enumerate(self.records):
            rows.append(
                {
                    "n": rec.n,
                    "wnorm_gap": rec.gap_to_opt,
                    "rate_ratio": rec.rate_ratio,
                    "chain_ok": rec.chain_ok,
                    "lsc_check": rec.lsc_check,
                    "terminated_by": self.terminated_by if i == len(self.records) - 1 else "",
                }
            )
        return rows

    def to_json(self) -> dict:
        return {
            "terminated_by": self.terminated_by,
            "gamma": self.gamma,
            "final_value": self.final_value.tolist(),
            "final_policy": list(self.final_policy.actions),
            "records": [
                {
                    "n": r.n,
                    "v": r.v.tolist(),
                    "v_e": r.v_e.tolist(),
                    "t_v_e": r.t_v_e.tolist(),
                    "policy": list(r.policy.actions),
                    "next_policy": list(r.next_policy.actions),
                    "gap_to_opt": r.gap_to_opt,
                    "rate_ratio": r.rate_ratio,
                    "chain_ok": r.chain_ok,
                    "lsc_check": r.lsc_check,
                }
                for r in self.records
            ],
        }


def _wgap(a, b, weight) -> float:
    return float(np.max(np.abs(a - b) / weight, initial=0.0))


def _ratio(v, v_next, v_star, weight) -> Optional[float]:
    # An exact repeat means both iterates are the fixed point; the ratio is 0/0.
    if np.array_equal(v, v_next):
        return None
    den = _wgap(v, v_star, weight)
    if den < RATIO_MIN_DENOM:
        return None
    return _wgap(v_next, v_star, weight) / den


def _geq(a, b, weight, tol) -> bool:
    return bool(np.all((a - b) / weight >= -tol))


def smoothed_policy_iteration(
    m: ModelSpec,
    f0: Optional[Policy] = None,
    eval_method: Optional[str] = None,
    tol: float = 1e-9,
    max_iter: int = PI_MAX_ITER,
    *,
    smooth: bool = True,
    v_star=None,
) -> tuple[PiTrace, Policy]:
    """Evaluate / smooth / improve until ||v_n^e - v_{n+1}||_W <= tol.

    ``smooth=False`` replaces the envelope by the identity, which is plain
    policy iteration.  Passing ``v_star`` fills gap and rate fields.
    """
    cert = require_certificate(m)
    weight = m.arrays.weight
    f = m.first_policy() if f0 is None else f0
    m.policy_pairs(f)
    v = evaluate_policy(m, f, eval_method, tol)
    records: list[PiRecord] = []
    terminated_by = MAX_ITER
    final_v, final_f = v, f
    for n in range(max_iter):
        v_e = lsc_envelope(m, v) if smooth else v.copy()
        t_v_e, f_next = bellman_T(m, v_e)
        v_next = v if f_next == f else evaluate_policy(m, f_next, eval_method, tol)
        v_next_e = lsc_envelope(m, v_next) if smooth else v_next
        chain_ok = (
            _geq(v, v_e, weight, CHAIN_TOL)
            and _geq(v_e, t_v_e, weight, CHAIN_TOL)
            and _geq(t_v_e, v_next, weight, CHAIN_TOL)
            and _geq(v_next, v_next_e, weight, CHAIN_TOL)
        )
        records.append(
            PiRecord(
                n=n,
                v=v,
                v_e=v_e,
                t_v_e=t_v_e,
                policy=f,
                next_policy=f_next,
                chain_ok=chain_ok,
                lsc_check=is_grid_lsc(m, t_v_e, LSC_TOL),
            )
        )
        final_v, final_f = v_next, f_next
        if w_norm(v_e - v_next, m) <= tol:
            terminated_by = FIXED_POINT
            break
        v, f = v_next, f_next
    final_e = lsc_envelope(m, final_v) if smooth else final_v
    trace = PiTrace(records, terminated_by, final_v, final_f, weight, cert.gamma, final_e)
    if v_star is not None:
        trace.attach_oracle(v_star)
    return trace, final_f


def standard_policy_iteration(m: ModelSpec, f0=None, eval_method=None, tol=1e-9, max_iter=PI_MAX_ITER, **kw):
    return smoothed_policy_iteration(m, f0, eval_method, tol, max_iter, smooth=False, **kw)


# --------------------------------------------------------------------------
# Descent chain
# --------------------------------------------------------------------------

CHAIN_LABELS = {
    1: "v_n >= v_n^e",
    2: "v_n^e >= T v_n^e",
    3: "T v_n^e >= v_{n+1}",
    4: "v_n >= v_{n+1}",
    5: "v_{n+1} >= v_{n+1}^e",
}


@dataclass(frozen=True)
class ChainViolation:
    n: int
    node: int
    inequality: int
    magnitude: float

    def __str__(self):
        return f"iteration {self.n}, node {self.node}: {CHAIN_LABELS[self.inequality]} fails by {self.magnitude:.3g}"


def check_descent_chain(trace: PiTrace, tol: float = CHAIN_TOL) -> list[ChainViolation]:
    """Check v_n >= v_n^e >= T v_n^e >= v_{n+1} >= v_{n+1}^e componentwise, W-scaled, within tol.

    Inequality 4 is the direct descent v_n >= v_{n+1}.  For the last record,
    v_{n+1} is the trace's final value when its envelope is stored; otherwise the
    cross-iteration inequalities 3-5 are vacuous there.
    """
    w = trace.weight
    out: list[ChainViolation] = []

    def check(n, idx, hi, lo):
        gap = (lo - hi) / w
        for x in np.flatnonzero(gap > tol):
            out.append(ChainViolation(n, int(x), idx, float(gap[x])))

    recs = trace.records
    for i, r in enumerate(recs):
        check(r.n, 1, r.v, r.v_e)
        check(r.n, 2, r.v_e, r.t_v_e)
        if i + 1 < len(recs):
            v_next, v_next_e = recs[i + 1].v, recs[i + 1].v_e
        elif trace.final_value_e is not None:
            v_next, v_next_e = trace.final_value, trace.final_value_e
        else:
            continue
        check(r.n, 3, r.t_v_e, v_next)
        check(r.n, 4, r.v, v_next)
        check(r.n, 5, v_next, v_next_e)
    return out


# --------------------------------------------------------------------------
# Rates
# --------------------------------------------------------------------------


@dataclass
class RateReport:
    gamma: float
    L: float
    errors: list[float]
    sup_errors: list[float]
    ratios: list[Optional[float]]
    ratio_ok: list[bool]
    final_error: float
    final_bound: float
    bound_ok: bool
    sublevel_errors: dict[float, list[float]] = field(default_factory=dict)

    @property
    def max_ratio(self) -> Optional[float]:
        vals = [r for r in self.ratios if r is not None]
        return max(vals) if vals else None

    @property
    def ok(self) -> bool:
        return self.bound_ok and all(self.ratio_ok)


def rate_report(
    trace: PiTrace,
    v_star,
    m: ModelSpec,
    levels: Sequence[float] = (),
    oracle_tol: float = 0.0,
    slack: float = 1e-8,
) -> RateReport:
    """Per-iteration W-norm errors and contraction ratios against ``v_star``.

    A ratio passes when it is <= gamma + slack + (1+gamma) oracle_tol / denominator,
    the last term absorbing the error of the oracle itself.  ``levels`` gives the
    sublevel sets {W <= lambda} on which sup-norm errors are reported.
    """
    v_star = np.asarray(v_star, dtype=float)
    w = m.arrays.weight
    gamma = trace.gamma
    vs = trace.values()
    errors = [_wgap(v, v_star, w) for v in vs]
    sup_errors = [float(np.max(np.abs(v - v_star), initial=0.0)) for v in vs]
    ratios, ok = [], []
    for a, b, ea in zip(vs, vs[1:], errors):
        r = _ratio(a, b, v_star, w)
        ratios.append(r)
        ok.append(r is None or r <= gamma + slack + (1 + gamma) * oracle_tol / ea)
    L = errors[0]
    n = len(vs) - 1
    final_bound = L * gamma**n + slack + 2 * oracle_tol
    sub = {}
    for lam in levels:
        mask = w <= lam
        sub[lam] = [float(np.max(np.abs(v - v_star)[mask], initial=0.0)) for v in vs]
    return RateReport(
        gamma=gamma,
        L=L,
        errors=errors,
        sup_errors=sup_errors,
        ratios=ratios,
        ratio_ok=ok,
        final_error=errors[-1],
        final_bound=final_bound,
        bound_ok=errors[-1] <= final_bound,
        sublevel_errors=sub,
    )


# --------------------------------------------------------------------------
# Best-improvement policy iteration
# --------------------------------------------------------------------------

INF_EPSILON = math.inf


def extract_argmin_sets(m: ModelSpec, u, epsilon: float = 1e-9) -> ArgminSets:
    """A_1(x) = {a : L u(x, a) <= T u(x) + epsilon * max(1, |T u(x)|)}."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    arr = m.arrays
    q = apply_L(m, u)
    tu, first = _greedy(m, q)
    if math.isinf(epsilon):
        keep = np.ones(arr.n_pairs, dtype=bool)
    else:
        thresh = tu + epsilon * np.maximum(1.0, np.abs(tu))
        keep = q <= thresh[arr.pair_state]
    keep[first] = True
    sets = tuple(
        tuple(arr.pair_action[lo : lo + c][keep[lo : lo + c]].tolist())
        for lo, c in zip(arr.offsets, arr.counts)
    )
    return ArgminSets(sets, float(epsilon))


@dataclass
class BestImprovementRecord:
    n: int
    w: np.ndarray              # w_n
    sets: ArgminSets           # A_{n+1}
    w_next: np.ndarray         # w_{n+1}, restricted fixed point
    policy: Policy             # f_{n+1}
    vi_iterations: int
    monotone_ok: bool          # w_n >= w_{n+1}
    continuity_check: bool     # w_{n+1} and -w_{n+1} grid-lsc
    gap_to_opt: Optional[float] = None
    rate_ratio: Optional[float] = None


@dataclass
class BestImprovementTrace:
    records: list[BestImprovementRecord]
    terminated_by: str
    final_value: np.ndarray
    final_policy: Policy
    weight: np.ndarray
    gamma: float

    @property
    def n_iter(self) -> int:
        return len(self.records)

    def values(self) -> list[np.ndarray]:
        vs = [r.w for r in self.records]
        if not vs or not np.array_equal(vs[-1], self.final_value):
            vs.append(self.final_value)
        return vs

    def attach_oracle(self, v_star) -> "BestImprovementTrace":
        v_star = np.asarray(v_star, dtype=float)
        for rec in self.records:
            rec.gap_to_opt = _wgap(rec.w, v_star, self.weight)
            rec.rate_ratio = _ratio(rec.w, rec.w_next, v_star, self.weight)
        return self

    def to_rows(self) -> list[dict]:
        return [
            {
                "n": r.n,
                "wnorm_gap": r.gap_to_opt,
                "rate_ratio": r.rate_ratio,
                "chain_ok": r.monotone_ok,
                "lsc_check": r.continuity_check,
                "terminated_by": self.terminated_by if i == len(self.records) - 1 else "",
            }
            for i, r in enumerate(self.records)
        ]

    def to_json(self) -> dict:
        return {
            "terminated_by": self.terminated_by,
            "gamma": self.gamma,
            "final_value": self.final_value.tolist(),
            "final_policy": list(self.final_policy.actions),
            "records": [
                {
                    "n": r.n,
                    "w": r.w.tolist(),
                    "w_next": r.w_next.tolist(),
                    "sets": [list(s) for s in r.sets.sets],
                    "policy": list(r.policy.actions),
                    "vi_iterations": r.vi_iterations,
                    "gap_to_opt": r.gap_to_opt,
                    "rate_ratio": r.rate_ratio,
                    "chain_ok": r.monotone_ok,
                    "lsc_check": r.continuity_check,
                }
                for r in self.records
            ],
        }


def best_improvement_pi(
    m: ModelSpec,
    f0: Optional[Policy] = None,
    epsilon: float = 1e-9,
    tol: float = 1e-9,
    max_iter: int = PI_MAX_ITER,
    *,
    v_star=None,
) -> tuple[BestImprovementTrace, Policy]:
    """PI whose improvement step solves the MDP restricted to the greedy argmin sets."""
    cert = require_certificate(m)
    weight = m.arrays.weight
    f0 = m.first_policy() if f0 is None else f0
    w = lsc_envelope(m, evaluate_policy(m, f0))
    records: list[BestImprovementRecord] = []
    terminated_by = MAX_ITER
    final_w, final_f = w, f0
    cache: dict[tuple, tuple[np.ndarray, Policy, int]] = {}
    for n in range(max_iter):
        sets = extract_argmin_sets(m, w, epsilon)
        # identical restricted models give bit-identical VI output; skip the re-solve
        if sets.sets not in cache:
            cache.clear()
            cache[sets.sets] = value_iteration(restrict_actions(m, sets), tol)
        w_next, f_next, k = cache[sets.sets]
        records.append(
            BestImprovementRecord(
                n=n,
                w=w,
                sets=sets,
                w_next=w_next,
                policy=f_next,
                vi_iterations=k,
                monotone_ok=_geq(w, w_next, weight, CHAIN_TOL),
                continuity_check=is_grid_lsc(m, w_next, LSC_TOL) and is_grid_lsc(m, -w_next, LSC_TOL),
            )
        )
        final_w, final_f = w_next, f_next
        if w_norm(w - w_next, m) <= tol:
            terminated_by = FIXED_POINT
            break
        w = w_next
    trace = BestImprovementTrace(records, terminated_by, final_w, final_f, weight, cert.gamma)
    if v_star is not None:
        trace.attach_oracle(v_star)
    return trace, final_f


# --------------------------------------------------------------------------
# Trace output
# --------------------------------------------------------------------------

CSV_COLUMNS = ("n", "wnorm_gap", "rate_ratio", "chain_ok", "lsc_check", "terminated_by")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in trace.to_rows():
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def trace_to_json(trace) -> str:
    return json.dumps(trace.to_json(), indent=1) + "\n"
