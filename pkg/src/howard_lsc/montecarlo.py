"""Monte Carlo cross-check of policy values.

Every trajectory owns its random stream: trajectory ``i`` of a batch started
with ``seed`` draws its uniforms from ``PCG64(splitmix64(seed + i))``, so a
trajectory is reproducible on its own and a batch does not depend on how it is
split across threads.  Next states are drawn by inverse CDF over the kernel
row, targets in increasing node order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lyapunov import require_certificate
from .model import ModelSpec, Policy

_MASK64 = (1 << 64) - 1
Z95 = 1.959963984540054


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (used to decorrelate consecutive seeds)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(splitmix64(int(seed) & _MASK64)))


def worker_count() -> int:
    """Thread cap from HOWARD_LSC_THREADS; 0 or unset means one per CPU."""
    try:
        n = int(os.environ.get("HOWARD_LSC_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    actions: tuple[int, ...]
    discounted_cost: float
    seed: int


@dataclass(frozen=True)
class Estimate:
    mean: float
    halfwidth95: float
    truncation_bound: float
    n_traj: int
    horizon: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "halfwidth95": self.halfwidth95,
            "truncation_bound": self.truncation_bound,
            "n_traj": self.n_traj,
            "horizon": self.horizon,
            "seed": self.seed,
        }


class _Sampler:
    """Inverse-CDF tables for the rows selected by a policy."""

    def __init__(self, m: ModelSpec, f: Policy):
        arr = m.arrays
        pairs = m.policy_pairs(f)
        rows = arr.P[pairs]
        width = max(1, int(np.diff(rows.indptr).max(initial=1)))
        n = arr.n
        self.targets = np.zeros((n, width), dtype=np.int64)
        self.cdf = np.full((n, width), np.inf)
        self.last = np.zeros(n, dtype=np.int64)
        for x in range(n):
            lo, hi = rows.indptr[x], rows.indptr[x + 1]
            ys, ps = rows.indices[lo:hi], rows.data[lo:hi]
            k = hi - lo
            self.targets[x, :k] = ys
            self.cdf[x, :k] = np.cumsum(ps)
            # last target with positive mass absorbs any round-off shortfall
            pos = np.flatnonzero(ps > 0)
            self.last[x] = pos[-1] if pos.size else k - 1
        self.cost = arr.cost[pairs]
        self.actions = np.asarray(f.actions, dtype=np.int64)
        self.alpha = arr.alpha

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        j = np.sum(self.cdf[x] <= u[:, None], axis=1)
        j = np.minimum(j, self.last[x])
        return self.targets[x, j]


def _run(sampler: _Sampler, x0: int, uniforms: np.ndarray):
    """Advance all rows of ``uniforms`` (one trajectory per row) from x0."""
    n_traj, horizon = uniforms.shape
    x = np.full(n_traj, x0, dtype=np.int64)
    total = np.zeros(n_traj)
    disc = 1.0
    path = np.empty((n_traj, horizon + 1), dtype=np.int64)
    path[:, 0] = x
    for k in range(horizon):
        total = total + disc * sampler.cost[x]
        x = sampler.step(x, uniforms[:, k])
        path[:, k + 1] = x
        disc *= sampler.alpha
    return total, path


def simulate_trajectory(m: ModelSpec, f: Policy, x0: int, horizon: int, seed: int) -> Trajectory:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sampler = _Sampler(m, f)
    u = stream(seed).random(horizon)[None, :]
    total, path = _run(sampler, x0, u)
    states = tuple(int(s) for s in path[0])
    return Trajectory(
        states=states,
        actions=tuple(int(sampler.actions[s]) for s in states[:-1]),
        discounted_cost=float(total[0]),
        seed=seed,
    )


def _draw(seed: int, n_traj: int, horizon: int) -> np.ndarray:
    out = np.empty((n_traj, horizon))

    def fill(i):
        out[i] = stream(seed + i).random(horizon)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        list(pool.map(fill, range(n_traj)))
    return out


def truncation_bound(m: ModelSpec, x0: int, horizon: int) -> float:
    cert = require_certificate(m)
    return cert.M * cert.gamma**horizon * float(m.arrays.weight[x0]) / (1.0 - cert.gamma)


def horizon_for(m: ModelSpec, x0: int, target: float) -> int:
    """Smallest horizon whose truncation bound at x0 is <= target."""
    cert = require_certificate(m)
    if cert.M == 0.0:
        return 1
    scale = cert.M * float(m.arrays.weight[x0]) / (1.0 - cert.gamma)
    h = max(1, math.ceil(math.log(target / scale) / math.log(cert.gamma)))
    while truncation_bound(m, x0, h) > target:
        h += 1
    return h


def estimate_value(
    m: ModelSpec, f: Policy, x0: int, n_traj: int, horizon: int, seed: int, chunk: int = 4096
) -> Estimate:
    """Sample mean of truncated discounted costs with a 95% normal halfwidth."""
    if n_traj < 2:
        raise ValueError("n_traj must be >= 2")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    bound = truncation_bound(m, x0, horizon)
    sampler = _Sampler(m, f)
    costs = np.empty(n_traj)
    for start in range(0, n_traj, chunk):
        stop = min(n_traj, start + chunk)
        u = _draw(seed + start, stop - start, horizon)
        costs[start:stop], _ = _run(sampler, x0, u)
    if np.ptp(costs) == 0.0:
        mean, half = float(costs[0]), 0.0
    else:
        mean = float(np.mean(costs))
        half = Z95 * float(np.std(costs, ddof=1)) / math.sqrt(n_traj)
    return Estimate(mean, half, bound, n_traj, horizon, seed)
