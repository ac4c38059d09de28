"""Parametrized desk-scale benchmark models.

``threshold``  1-D grid with a cost jump at 0.5 and a boundary node there; the
               only family whose envelope step is not the identity.
``inventory``  single-item stock control with lost sales.
``queueing``   admission control for a discrete-time single-server queue.
``random``     seeded random finite MDPs (property-test fodder).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .model import BOUNDARY, INTERIOR, Action, ModelSpec, Node, StructuredGrid, canonicalize

STAY, MOVE = 0, 1
MOVE_PROB = 0.9


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _row(dist: dict[int, float]) -> tuple[tuple[int, float], ...]:
    return tuple(sorted((y, p) for y, p in dist.items() if p > 0.0))


def make_threshold_model(n_cells: int = 21, jump: float = 1.0, alpha: float = 0.9) -> ModelSpec:
    """Cells on [0, 1) at x_i = i / n_cells plus a boundary node at 0.5.

    The boundary node b sits between cells l = (n_cells - 1) // 2 and r = l + 1,
    which form its envelope neighborhood.  Actions: stay (self-loop) and
    move-right (one cell right w.p. 0.9, stay w.p. 0.1; the last cell and b
    move onto themselves / onto r).

    Cost = base(x) + jump * 1{x >= 0.5} + wait * 1{stay}, with a base that is
    cheapest at r:  3*jump*(1.5 - x) left of the threshold, 0 at r,
    s*(1 + x - x_r) right of r with s = 3*jump*max(4, 1/alpha), and 1.5*jump
    at b.  wait = 2*jump.  With these constants every action at b is no more
    expensive than the same action at l, and b's move-right beats anything r
    can do against a policy value, so T keeps envelopes of policy values
    grid-lsc.  Staying at b still costs more than staying at r, so the
    always-stay value is not grid-lsc at b.
    """
    if n_cells < 3 or n_cells % 2 == 0:
        raise ValueError("n_cells must be an odd integer >= 3")
    if not jump > 0:
        raise ValueError("jump must be positive")
    _check_alpha(alpha)
    n = n_cells
    l = (n - 1) // 2
    r = l + 1
    b = n
    x_r = r / n
    s_left = 3.0 * jump
    s_right = 3.0 * jump * max(4.0, 1.0 / alpha)
    wait = 2.0 * jump

    def base(i: int) -> float:
        x = i / n
        if i < r:
            return s_left * (1.5 - x)
        if i == r:
            return 0.0
        return s_right * (1.0 + x - x_r)

    nodes, actions = [], []
    for i in range(n):
        x = i / n
        c = base(i) + (jump if x >= 0.5 else 0.0)
        right = min(i + 1, n - 1)
        move = {i: 1.0 - MOVE_PROB}
        move[right] = move.get(right, 0.0) + MOVE_PROB
        nodes.append(Node(i, (x,), INTERIOR, ()))
        actions.append(
            (
                Action(STAY, c + wait, ((i, 1.0),)),
                Action(MOVE, c, _row(move)),
            )
        )
    c_b = 0.5 * s_left + jump
    nodes.append(Node(b, (0.5,), BOUNDARY, (l, r)))
    actions.append(
        (
            Action(STAY, c_b + wait, ((b, 1.0),)),
            Action(MOVE, c_b, _row({r: MOVE_PROB, b: 1.0 - MOVE_PROB})),
        )
    )
    return canonicalize(
        ModelSpec(
            grid=StructuredGrid(tuple(nodes)),
            actions=tuple(actions),
            alpha=float(alpha),
            weight=(1.0,) * (n + 1),
            meta={"family": "threshold", "n_cells": n_cells, "jump": jump},
        )
    )


def geometric_demand(max_demand: int = 6, p: float = 0.4) -> list[float]:
    """Truncated geometric pmf on 0..max_demand, tail mass folded into max_demand."""
    probs = [p * (1 - p) ** k for k in range(max_demand)]
    probs.append(1.0 - sum(probs))
    return probs


def make_inventory_model(
    capacity: int = 20,
    demand_probs: Sequence[float] | None = None,
    order_cost: float = 1.0,
    holding_cost: float = 0.5,
    alpha: float = 0.9,
    *,
    shortage_cost: float = 2.0,
    weight_scale: float = 0.005,
) -> ModelSpec:
    """Stock x in 0..capacity; order a in 0..capacity-x; next stock max(x + a - D, 0).

    Cost is order_cost*a + holding_cost*x + shortage_cost*E[(D - x - a)^+].
    W(x) = 1 + weight_scale*x; the default scale keeps alpha*beta < 1 at
    alpha = 0.9, while weight_scale = 1 gives the plain 1 + x weight.
    """
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    demand = np.asarray(geometric_demand() if demand_probs is None else demand_probs, dtype=float)
    if demand.ndim != 1 or demand.size == 0 or np.any(demand < 0) or abs(demand.sum() - 1.0) > 1e-12:
        raise ValueError("demand_probs must be a probability vector")
    if min(order_cost, holding_cost, shortage_cost) < 0:
        raise ValueError("costs must be >= 0")
    if weight_scale < 0:
        raise ValueError("weight_scale must be >= 0")
    _check_alpha(alpha)
    nodes, actions, weight = [], [], []
    for x in range(capacity + 1):
        acts = []
        for a in range(capacity - x + 1):
            level = x + a
            dist: dict[int, float] = {}
            short = 0.0
            for d, p in enumerate(demand):
                if p == 0.0:
                    continue
                y = max(level - d, 0)
                dist[y] = dist.get(y, 0.0) + p
                short += p * max(d - level, 0)
            cost = order_cost * a + holding_cost * x + shortage_cost * short
            acts.append(Action(a, cost, _row(dist)))
        nodes.append(Node(x, (float(x),), INTERIOR, ()))
        actions.append(tuple(acts))
        weight.append(1.0 + weight_scale * x)
    return ModelSpec(
        grid=StructuredGrid(tuple(nodes)),
        actions=tuple(actions),
        alpha=float(alpha),
        weight=tuple(weight),
        meta={"family": "inventory"},
    )


ADMIT, REJECT = 0, 1


def make_queueing_model(
    buffer: int = 10,
    arrival_p: float = 0.1,
    service_p: float = 0.3,
    reject_cost: float = 5.0,
    hold_cost: float = 1.0,
    alpha: float = 0.9,
    *,
    weight_scale: float = 1.0,
) -> ModelSpec:
    """Queue length x in 0..buffer; the action decides the fate of this slot's arrival.

    Per slot: a job arrives w.p. arrival_p, the job in service (if any)
    completes w.p. service_p, independently.  An admitted arrival joins unless
    the buffer is full (then it is lost at no extra cost).  Cost is
    hold_cost*x + reject_cost*arrival_p*1{reject}, i.e. the rejection fee paid
    in expectation.  W(x) = 1 + weight_scale*x.
    """
    if buffer < 1:
        raise ValueError("buffer must be >= 1")
    if not (0 < arrival_p < 1 and 0 < service_p < 1):
        raise ValueError("probabilities must lie in (0, 1)")
    if min(reject_cost, hold_cost) < 0:
        raise ValueError("costs must be >= 0")
    _check_alpha(alpha)
    nodes, actions, weight = [], [], []
    for x in range(buffer + 1):
        acts = []
        service = ((1, service_p), (0, 1 - service_p)) if x > 0 else ((0, 1.0),)
        for a in (ADMIT, REJECT):
            dist: dict[int, float] = {}
            for arrive, pa in ((1, arrival_p), (0, 1 - arrival_p)):
                for served, ps in service:
                    y = x - served + (arrive if a == ADMIT else 0)
                    y = min(max(y, 0), buffer)
                    dist[y] = dist.get(y, 0.0) + pa * ps
            cost = hold_cost * x + (reject_cost * arrival_p if a == REJECT else 0.0)
            acts.append(Action(a, cost, _row(dist)))
        nodes.append(Node(x, (float(x),), INTERIOR, ()))
        actions.append(tuple(acts))
        weight.append(1.0 + weight_scale * x)
    return ModelSpec(
        grid=StructuredGrid(tuple(nodes)),
        actions=tuple(actions),
        alpha=float(alpha),
        weight=tuple(weight),
        meta={"family": "queueing"},
    )


def make_random_finite_mdp(
    n_states: int = 20, n_actions: int = 3, sparsity: int = 3, seed: int = 0, alpha: float = 0.9
) -> ModelSpec:
    """Costs uniform on [-1, 1]; each row spreads Dirichlet mass over ``sparsity`` distinct targets."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    if not 1 <= sparsity <= n_states:
        raise ValueError("sparsity must lie in [1, n_states]")
    _check_alpha(alpha)
    rng = np.random.default_rng(seed)
    nodes, actions = [], []
    for x in range(n_states):
        acts = []
        for a in range(n_actions):
            cost = float(rng.uniform(-1.0, 1.0))
            targets = np.sort(rng.choice(n_states, size=sparsity, replace=False))
            probs = rng.dirichlet(np.ones(sparsity))
            # push the rounding residue onto the largest entry so rows sum to 1 within 1e-12
            probs[np.argmax(probs)] += 1.0 - math.fsum(probs)
            acts.append(Action(a, cost, tuple((int(y), float(p)) for y, p in zip(targets, probs))))
        nodes.append(Node(x, (float(x),), INTERIOR, ()))
        actions.append(tuple(acts))
    return ModelSpec(
        grid=StructuredGrid(tuple(nodes)),
        actions=tuple(actions),
        alpha=float(alpha),
        weight=(1.0,) * n_states,
        meta={"family": "random", "seed": seed},
    )


GENERATORS = {
    "threshold": make_threshold_model,
    "inventory": make_inventory_model,
    "queueing": make_queueing_model,
    "random": make_random_finite_mdp,
}
