"""MDP model instances on finite structured grids.

A model is the tuple (states, actions, admissible sets, kernel, cost) plus the
discount factor and the Lyapunov weight.  States are nodes of a
:class:`StructuredGrid`; each node carries its admissible actions, and each
action carries its one-step cost and its sparse transition row, so cost and
kernel exist for exactly the admissible pairs.

Numerical work never touches the nested tuples directly: :attr:`ModelSpec.arrays`
flattens the admissible pairs into numpy/scipy arrays once per instance.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import ModelParseError, ModelSchemaError, ModelValidationError

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY = "boundary"
ROW_SUM_TOL = 1e-12

# Keys that look like user-asserted growth constants; they are never trusted.
_IGNORED_CERT_KEYS = ("M", "beta", "gamma", "certificate")


@dataclass(frozen=True)
class Node:
    id: int
    coordinate: tuple[float, ...] = ()
    kind: str = INTERIOR
    envelope_neighbors: tuple[int, ...] = ()


@dataclass(frozen=True)
class StructuredGrid:
    nodes: tuple[Node, ...]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Action:
    """An admissible action at some node: its cost and sparse row Q(.|x, a)."""

    id: int
    cost: float
    transitions: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class Policy:
    """Stationary deterministic policy: ``actions[x]`` is the action id chosen at node x."""

    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, x: int) -> int:
        return self.actions[x]


@dataclass(frozen=True)
class ArgminSets:
    """Per-node sets of (near-)minimizing action ids, with the epsilon used to build them."""

    sets: tuple[tuple[int, ...], ...]
    epsilon: float = 0.0

    def n_policies(self) -> int:
        return math.prod(len(s) for s in self.sets)


@dataclass(frozen=True)
class CompiledModel:
    """Flat array view of the admissible pairs, in node order then action-id order."""

    n: int
    alpha: float
    weight: np.ndarray        # (N,)
    offsets: np.ndarray       # (N,) first pair index of each node
    counts: np.ndarray        # (N,) |A(x)|
    pair_state: np.ndarray    # (K,)
    pair_action: np.ndarray   # (K,) action ids
    cost: np.ndarray          # (K,)
    P: sp.csr_matrix          # (K, N)
    env_src: np.ndarray       # boundary node of each envelope edge
    env_dst: np.ndarray       # neighbor of each envelope edge

    @property
    def n_pairs(self) -> int:
        return len(self.cost)


@dataclass(frozen=True)
class ModelSpec:
    grid: StructuredGrid
    actions: tuple[tuple[Action, ...], ...]
    alpha: float
    weight: tuple[float, ...]
    meta: Mapping[str, object] = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_states(self) -> int:
        return len(self.grid.nodes)

    def action_ids(self, x: int) -> tuple[int, ...]:
        return tuple(a.id for a in self.actions[x])

    @cached_property
    def arrays(self) -> CompiledModel:
        """Compile to flat arrays.  Only meaningful on a model that validates."""
        n = self.n_states
        offsets = np.zeros(n, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        states, act_ids, costs = [], [], []
        rows, cols, vals = [], [], []
        k = 0
        for x in range(n):
            acts = sorted(self.actions[x], key=lambda a: a.id)
            offsets[x] = k
            counts[x] = len(acts)
            for a in acts:
                states.append(x)
                act_ids.append(a.id)
                costs.append(a.cost)
                for y, p in sorted(a.transitions):
                    rows.append(k)
                    cols.append(y)
                    vals.append(p)
                k += 1
        P = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(k, n),
        )
        P.sum_duplicates()
        P.sort_indices()
        src, dst = [], []
        for node in self.grid.nodes:
            for y in sorted(node.envelope_neighbors):
                src.append(node.id)
                dst.append(y)
        return CompiledModel(
            n=n,
            alpha=float(self.alpha),
            weight=np.asarray(self.weight, dtype=float),
            offsets=offsets,
            counts=counts,
            pair_state=np.asarray(states, dtype=np.int64),
            pair_action=np.asarray(act_ids, dtype=np.int64),
            cost=np.asarray(costs, dtype=float),
            P=P,
            env_src=np.asarray(src, dtype=np.int64),
            env_dst=np.asarray(dst, dtype=np.int64),
        )

    def policy_pairs(self, f: Policy) -> np.ndarray:
        """Pair index of (x, f(x)) for every node.  Raises ValueError if f is inadmissible."""
        arr = self.arrays
        if len(f) != arr.n:
            raise ValueError(f"policy has {len(f)} entries, model has {arr.n} nodes")
        out = np.empty(arr.n, dtype=np.int64)
        for x, a in enumerate(f.actions):
            lo, hi = arr.offsets[x], arr.offsets[x] + arr.counts[x]
            j = lo + np.searchsorted(arr.pair_action[lo:hi], a)
            if j >= hi or arr.pair_action[j] != a:
                raise ValueError(f"action {a} is not admissible at node {x}")
            out[x] = j
        return out

    def is_admissible(self, f: Policy) -> bool:
        try:
            self.policy_pairs(f)
        except ValueError:
            return False
        return True

    def first_policy(self) -> Policy:
        """The policy choosing the lowest action id everywhere."""
        return Policy(tuple(min(self.action_ids(x)) for x in range(self.n_states)))

    def with_alpha(self, alpha: float) -> "ModelSpec":
        return replace(self, alpha=float(alpha))


GridFunction = np.ndarray
"""Real values per node, stored as a float array of length N."""


def as_grid_function(m: ModelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (m.n_states,):
        raise ValueError(f"expected a grid function of shape ({m.n_states},), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("grid function has non-finite values")
    return u


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """A broken model invariant.  ``location`` names the node / pair involved."""

    location: tuple = ()
    detail: str = ""

    @property
    def rule(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        loc = ",".join(str(v) for v in self.location)
        s = f"{self.rule}({loc})"
        return f"{s}: {self.detail}" if self.detail else s

    def to_dict(self) -> dict:
        return {"rule": self.rule, "location": list(self.location), "detail": self.detail}


class EmptyGrid(Violation): pass
class NodeIdMismatch(Violation): pass
class UnknownKind(Violation): pass
class UnknownNeighbor(Violation): pass
class InteriorHasNeighbors(Violation): pass
class SelfNeighbor(Violation): pass
class TwoLayerViolation(Violation): pass
class ShapeMismatch(Violation): pass
class EmptyActionSet(Violation): pass
class DuplicateAction(Violation): pass
class NonFiniteCost(Violation): pass
class UnknownTarget(Violation): pass
class DuplicateTarget(Violation): pass
class NegativeProbability(Violation): pass
class RowSumViolation(Violation): pass
class WeightBelowOne(Violation): pass
class AlphaOutOfRange(Violation): pass


def _v(cls, *location, detail=""):
    return cls(tuple(location), detail)


def validate_model(m: ModelSpec) -> list[Violation]:
    """Return every invariant violation in ``m``; an empty list means the model is valid."""
    out: list[Violation] = []
    nodes = m.grid.nodes
    n = len(nodes)
    if n == 0:
        out.append(_v(EmptyGrid, detail="grid has no nodes"))
    for pos, node in enumerate(nodes):
        if node.id != pos:
            out.append(_v(NodeIdMismatch, pos, detail=f"node at position {pos} has id {node.id}"))
    for pos, node in enumerate(nodes):
        if node.kind not in (INTERIOR, BOUNDARY):
            out.append(_v(UnknownKind, pos, detail=f"kind {node.kind!r}"))
    for pos, node in enumerate(nodes):
        nbrs = list(node.envelope_neighbors)
        if node.kind == INTERIOR and nbrs:
            out.append(_v(InteriorHasNeighbors, pos))
        for y in nbrs:
            if not isinstance(y, (int, np.integer)) or not 0 <= y < n:
                out.append(_v(UnknownNeighbor, pos, y))
            elif y == pos:
                out.append(_v(SelfNeighbor, pos))
            elif nodes[y].kind != INTERIOR or nodes[y].envelope_neighbors:
                out.append(_v(TwoLayerViolation, pos, y, detail="envelope neighbor is not an interior node"))

    if len(m.actions) != n:
        out.append(_v(ShapeMismatch, "actions", detail=f"{len(m.actions)} action lists for {n} nodes"))
    if len(m.weight) != n:
        out.append(_v(ShapeMismatch, "weight", detail=f"{len(m.weight)} weights for {n} nodes"))

    try:
        alpha_ok = 0.0 < float(m.alpha) < 1.0
    except (TypeError, ValueError):
        alpha_ok = False
    if not alpha_ok:
        out.append(_v(AlphaOutOfRange, detail=f"alpha={m.alpha!r}"))

    for x, w in enumerate(m.weight):
        if not (isinstance(w, (int, float, np.floating)) and math.isfinite(w) and w >= 1.0):
            out.append(_v(WeightBelowOne, x, detail=f"W={w!r}"))

    for x, acts in enumerate(m.actions):
        if not acts:
            out.append(_v(EmptyActionSet, x))
            continue
        seen = set()
        for a in acts:
            if a.id in seen:
                out.append(_v(DuplicateAction, x, a.id))
            seen.add(a.id)
            if not (isinstance(a.cost, (int, float, np.floating)) and math.isfinite(a.cost)):
                out.append(_v(NonFiniteCost, x, a.id, detail=f"C={a.cost!r}"))
            targets = set()
            total = 0.0
            row_ok = True
            for y, p in a.transitions:
                if not isinstance(y, (int, np.integer)) or not 0 <= y < n:
                    out.append(_v(UnknownTarget, x, a.id, y))
                    row_ok = False
                elif y in targets:
                    out.append(_v(DuplicateTarget, x, a.id, y))
                targets.add(y)
                if not (isinstance(p, (int, float, np.floating)) and math.isfinite(p)) or p < 0:
                    out.append(_v(NegativeProbability, x, a.id, y, detail=f"p={p!r}"))
                    row_ok = False
                else:
                    total += p
            if row_ok and abs(total - 1.0) > ROW_SUM_TOL:
                out.append(_v(RowSumViolation, x, a.id, detail=f"row sums to {total!r}"))
    return out


def ensure_valid(m: ModelSpec) -> ModelSpec:
    problems = validate_model(m)
    if problems:
        raise ModelValidationError(problems)
    return m


def restrict_actions(m: ModelSpec, sets: ArgminSets | Sequence[Iterable[int]]) -> ModelSpec:
    """Model identical to ``m`` except that A(x) is cut down to ``sets[x]``."""
    raw = sets.sets if isinstance(sets, ArgminSets) else sets
    raw = [set(int(a) for a in s) for s in raw]
    if len(raw) != m.n_states:
        raise ValueError(f"{len(raw)} action sets for {m.n_states} nodes")
    new_actions = []
    for x, keep in enumerate(raw):
        acts = tuple(a for a in m.actions[x] if a.id in keep)
        missing = keep - {a.id for a in acts}
        if missing:
            raise ValueError(f"actions {sorted(missing)} are not admissible at node {x}")
        if not acts:
            raise ValueError(f"restricted action set at node {x} is empty")
        new_actions.append(acts)
    return replace(m, actions=tuple(new_actions))


# --------------------------------------------------------------------------
# JSON format
# --------------------------------------------------------------------------


def canonicalize(m: ModelSpec) -> ModelSpec:
    """Sort nodes and actions by id and transitions by target node."""
    order = sorted(range(m.n_states), key=lambda i: m.grid.nodes[i].id)
    nodes = tuple(
        replace(m.grid.nodes[i], envelope_neighbors=tuple(sorted(m.grid.nodes[i].envelope_neighbors)))
        for i in order
    )
    actions = tuple(
        tuple(
            replace(a, transitions=tuple(sorted(a.transitions)))
            for a in sorted(m.actions[i], key=lambda a: a.id)
        )
        for i in order
    )
    weight = tuple(m.weight[i] for i in order)
    return replace(m, grid=StructuredGrid(nodes), actions=actions, weight=weight)


def model_to_dict(m: ModelSpec) -> dict:
    m = canonicalize(m)
    nodes = []
    for node, acts, w in zip(m.grid.nodes, m.actions, m.weight):
        nodes.append(
            {
                "id": node.id,
                "coordinate": list(node.coordinate),
                "kind": node.kind,
                "envelope_neighbors": list(node.envelope_neighbors),
                "weight": w,
                "actions": [
                    {"id": a.id, "cost": a.cost, "transitions": [[y, p] for y, p in a.transitions]}
                    for a in acts
                ],
            }
        )
    return {"alpha": m.alpha, "nodes": nodes}


def dumps_model(m: ModelSpec) -> str:
    return json.dumps(model_to_dict(m), indent=1, sort_keys=True) + "\n"


def save_model(m: ModelSpec, target: Union[str, IO[str]]) -> None:
    text = dumps_model(m)
    if isinstance(target, str):
        with open(target, "w") as fh:
            fh.write(text)
    else:
        target.write(text)


def _require(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping):
        raise ModelSchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise ModelSchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ModelSchemaError(f"{where}: expected an integer, got {v!r}")
    return v


def _as_num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelSchemaError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _parse_transitions(raw, where: str) -> tuple[tuple[int, float], ...]:
    if not isinstance(raw, list):
        raise ModelSchemaError(f"{where}: transitions must be an array")
    # Dense rows are a flat list of probabilities indexed by node id.
    if raw and all(not isinstance(e, list) for e in raw):
        return tuple(
            (y, _as_num(p, f"{where}[{y}]")) for y, p in enumerate(raw) if _as_num(p, f"{where}[{y}]") != 0.0
        )
    out = []
    for i, e in enumerate(raw):
        if not isinstance(e, list) or len(e) != 2:
            raise ModelSchemaError(f"{where}[{i}]: expected [node_id, prob]")
        out.append((_as_int(e[0], f"{where}[{i}][0]"), _as_num(e[1], f"{where}[{i}][1]")))
    return tuple(sorted(out))


def model_from_dict(doc: Mapping) -> ModelSpec:
    if not isinstance(doc, Mapping):
        raise ModelSchemaError("top level must be an object")
    ignored = [k for k in _IGNORED_CERT_KEYS if k in doc]
    if ignored:
        log.warning("ignoring user-supplied growth constants %s; certificates are always computed", ignored)
    alpha = _as_num(_require(doc, "alpha", "model"), "alpha")
    raw_nodes = _require(doc, "nodes", "model")
    if not isinstance(raw_nodes, list):
        raise ModelSchemaError("nodes must be an array")
    parsed = []
    for i, rn in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        nid = _as_int(_require(rn, "id", where), f"{where}.id")
        coord = rn.get("coordinate", [])
        if not isinstance(coord, list):
            raise ModelSchemaError(f"{where}.coordinate must be an array")
        kind = _require(rn, "kind", where)
        if not isinstance(kind, str):
            raise ModelSchemaError(f"{where}.kind must be a string")
        nbrs = rn.get("envelope_neighbors", [])
        if not isinstance(nbrs, list):
            raise ModelSchemaError(f"{where}.envelope_neighbors must be an array")
        weight = _as_num(_require(rn, "weight", where), f"{where}.weight")
        raw_acts = _require(rn, "actions", where)
        if not isinstance(raw_acts, list):
            raise ModelSchemaError(f"{where}.actions must be an array")
        acts = []
        for j, ra in enumerate(raw_acts):
            aw = f"{where}.actions[{j}]"
            acts.append(
                Action(
                    id=_as_int(_require(ra, "id", aw), f"{aw}.id"),
                    cost=_as_num(_require(ra, "cost", aw), f"{aw}.cost"),
                    transitions=_parse_transitions(_require(ra, "transitions", aw), f"{aw}.transitions"),
                )
            )
        node = Node(
            id=nid,
            coordinate=tuple(_as_num(c, f"{where}.coordinate") for c in coord),
            kind=kind,
            envelope_neighbors=tuple(sorted(_as_int(y, f"{where}.envelope_neighbors") for y in nbrs)),
        )
        parsed.append((node, tuple(sorted(acts, key=lambda a: a.id)), weight))
    parsed.sort(key=lambda t: t[0].id)
    return ModelSpec(
        grid=StructuredGrid(tuple(p[0] for p in parsed)),
        actions=tuple(p[1] for p in parsed),
        alpha=alpha,
        weight=tuple(p[2] for p in parsed),
    )


def load_model(source: Union[str, bytes, IO]) -> ModelSpec:
    """Parse and validate a JSON model from a path, bytes, or an open stream."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    try:
        if isinstance(source, str):
            with open(source, "rb") as fh:
                doc = json.load(fh)
        else:
            doc = json.load(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelParseError(str(exc)) from exc
    return ensure_valid(model_from_dict(doc))


def loads_model(text: str) -> ModelSpec:
    return load_model(text.encode())


def load_policy(source: Union[str, IO]) -> Policy:
    try:
        if isinstance(source, str):
            with open(source) as fh:
                doc = json.load(fh)
        else:
            doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise ModelParseError(str(exc)) from exc
    if not isinstance(doc, list) or any(isinstance(a, bool) or not isinstance(a, int) for a in doc):
        raise ModelSchemaError("policy file must be a JSON array of integer action ids")
    return Policy(tuple(doc))


def dumps_policy(f: Policy) -> str:
    return json.dumps(list(f.actions)) + "\n"
