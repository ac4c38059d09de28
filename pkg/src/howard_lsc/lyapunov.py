"""Growth (Lyapunov) certificates and weighted sup-norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envelope import is_grid_lsc
from .errors import CertificateError
from .model import ModelSpec, Violation


@dataclass(frozen=True)
class GrowthCertificate:
    M: float
    beta: float
    gamma: float
    passed: bool
    witness_M: tuple[int, int]
    witness_beta: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "beta": self.beta,
            "gamma": self.gamma,
            "pass": self.passed,
            "witness_M": list(self.witness_M),
            "witness_beta": list(self.witness_beta),
        }


def certify_growth(m: ModelSpec) -> GrowthCertificate:
    """Tightest constants with |C| <= M W and QW <= beta W over all admissible pairs.

    beta is floored at 1; the certificate passes iff gamma = alpha * beta < 1.
    Witnesses are the first pair (node order, then action id) attaining each max.
    """
    arr = m.arrays
    w_pair = arr.weight[arr.pair_state]
    cost_ratio = np.abs(arr.cost) / w_pair
    drift_ratio = (arr.P @ arr.weight) / w_pair
    i_m = int(np.argmax(cost_ratio))
    i_b = int(np.argmax(drift_ratio))
    M = float(cost_ratio[i_m])
    beta = max(1.0, float(drift_ratio[i_b]))
    gamma = float(arr.alpha) * beta
    return GrowthCertificate(
        M=M,
        beta=beta,
        gamma=gamma,
        passed=gamma < 1.0,
        witness_M=(int(arr.pair_state[i_m]), int(arr.pair_action[i_m])),
        witness_beta=(int(arr.pair_state[i_b]), int(arr.pair_action[i_b])),
    )


def require_certificate(m: ModelSpec) -> GrowthCertificate:
    cert = certify_growth(m)
    if not cert.passed:
        raise CertificateError(
            f"gamma >= 1 (gamma={cert.gamma!r}, beta={cert.beta!r} at {cert.witness_beta})"
        )
    return cert


def w_norm(u, m: ModelSpec) -> float:
    """sup_x |u(x)| / W(x)."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        return 0.0
    return float(np.max(np.abs(u) / m.arrays.weight))


def value_bound(c: GrowthCertificate) -> float:
    """Bound M / (1 - gamma) on the W-norm of every policy value."""
    if not c.passed:
        raise CertificateError(f"gamma >= 1 (gamma={c.gamma!r})")
    return c.M / (1.0 - c.gamma)


class WeightDiscontinuity(Violation):
    pass


def check_weight_continuity(m: ModelSpec, tol: float = 0.0) -> list[Violation]:
    """Grid analog of "W is continuous": W and -W both grid-lsc.

    Only boundary nodes can fail; one violation per offending node.
    """
    arr = m.arrays
    w = arr.weight
    if is_grid_lsc(m, w, tol) and is_grid_lsc(m, -w, tol):
        return []
    out = []
    for x in np.unique(arr.env_src):
        nbrs = w[arr.env_dst[arr.env_src == x]]
        if w[x] > nbrs.min() + tol or w[x] < nbrs.max() - tol:
            out.append(
                WeightDiscontinuity(
                    (int(x),), f"W={w[x]!r} vs neighbors in [{nbrs.min()!r}, {nbrs.max()!r}]"
                )
            )
    return out
