"""Dynamic programming operators and exact policy evaluation.

Q-functions live on the flattened admissible pairs of ``ModelSpec.arrays``:
index k is the pair (pair_state[k], pair_action[k]), nodes in order and
actions sorted by id within each node.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SingularSystemError
from .lyapunov import require_certificate, w_norm
from .model import ModelSpec, Policy

DIRECT_MAX_N = 2000
DEFAULT_MAX_ITER = 10**6


def apply_L(m: ModelSpec, u) -> np.ndarray:
    """L u(x, a) = C(x, a) + alpha * sum_y u(y) Q(y | x, a), one entry per admissible pair."""
    arr = m.arrays
    return arr.cost + arr.alpha * (arr.P @ np.asarray(u, dtype=float))


def _greedy(m: ModelSpec, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    arr = m.arrays
    tu = np.minimum.reduceat(q, arr.offsets)
    # lowest action id among exact minimizers
    idx = np.arange(arr.n_pairs)
    cand = np.where(q == tu[arr.pair_state], idx, arr.n_pairs)
    first = np.minimum.reduceat(cand, arr.offsets)
    return tu, first


def bellman_T(m: ModelSpec, u) -> tuple[np.ndarray, Policy]:
    tu, pairs = _greedy(m, apply_L(m, u))
    return tu, Policy(tuple(m.arrays.pair_action[pairs].tolist()))


def apply_Tf(m: ModelSpec, f: Policy, u) -> np.ndarray:
    arr = m.arrays
    pairs = m.policy_pairs(f)
    return arr.cost[pairs] + arr.alpha * (arr.P[pairs] @ np.asarray(u, dtype=float))


def _solve_direct(m: ModelSpec, pairs: np.ndarray) -> np.ndarray:
    arr = m.arrays
    c = arr.cost[pairs]
    Qf = arr.P[pairs]
    A = (sp.identity(arr.n, format="csc") - arr.alpha * Qf).tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    v = lu.solve(c)
    # one step of iterative refinement
    r = c - A @ v
    v = v + lu.solve(r)
    if not np.all(np.isfinite(v)):
        raise SingularSystemError("policy evaluation produced non-finite values")
    return v


def _solve_iterative(m: ModelSpec, pairs: np.ndarray, gamma: float, tol: float, max_iter: int) -> np.ndarray:
    arr = m.arrays
    c = arr.cost[pairs]
    Qf = arr.P[pairs]
    threshold = tol * (1.0 - gamma) / gamma
    v = np.zeros(arr.n)
    for _ in range(max_iter):
        v_new = c + arr.alpha * (Qf @ v)
        if w_norm(v_new - v, m) <= threshold:
            return v_new
        v = v_new
    raise ConvergenceError(f"policy evaluation did not converge in {max_iter} iterations")


def evaluate_policy(
    m: ModelSpec,
    f: Policy,
    method: str | None = None,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Value V_f of a stationary policy: the fixed point of T_f.

    ``method="direct"`` factors (I - alpha Q_f); ``"iterative"`` iterates T_f from 0
    and stops once the a-posteriori bound guarantees ||v - V_f||_W <= tol.
    ``None`` picks direct up to 2000 nodes.
    """
    cert = require_certificate(m)
    pairs = m.policy_pairs(f)
    if method is None:
        method = "direct" if m.n_states <= DIRECT_MAX_N else "iterative"
    if method == "direct":
        return _solve_direct(m, pairs)
    if method == "iterative":
        if tol <= 0:
            raise ValueError("tol must be positive")
        return _solve_iterative(m, pairs, cert.gamma, tol, max_iter)
    raise ValueError(f"unknown evaluation method {method!r}")
