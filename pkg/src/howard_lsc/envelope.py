"""Discrete lower semicontinuous envelope on a two-layer structured grid.

A boundary node stands for a point that its ``envelope_neighbors`` approach, so
the envelope there is the smallest value in that neighborhood (itself included).
Interior nodes are isolated and keep their value.  Because neighbors of a
boundary node are always interior, one pass is already the fixed point.
"""

from __future__ import annotations

import numpy as np

from .model import ModelSpec


def lsc_envelope(m: ModelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    arr = m.arrays
    out = u.copy()
    if arr.env_src.size:
        np.minimum.at(out, arr.env_src, u[arr.env_dst])
    return out


def is_grid_lsc(m: ModelSpec, u, tol: float = 0.0) -> bool:
    """True iff u(b) <= u(y) + tol for every boundary node b and neighbor y."""
    u = np.asarray(u, dtype=float)
    arr = m.arrays
    if not arr.env_src.size:
        return True
    return bool(np.all(u[arr.env_src] <= u[arr.env_dst] + tol))


def lsc_defect(m: ModelSpec, u) -> float:
    """sup-norm distance between u and its envelope (0 iff u is grid-lsc)."""
    u = np.asarray(u, dtype=float)
    return float(np.max(u - lsc_envelope(m, u), initial=0.0))
