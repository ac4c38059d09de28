import numpy as np
import pytest

from howard_lsc.model import BOUNDARY, INTERIOR, Action, ModelSpec, Node, StructuredGrid


def single_node(cost=1.0, alpha=0.5):
    return ModelSpec(
        grid=StructuredGrid((Node(0, (0.0,)),)),
        actions=((Action(0, cost, ((0, 1.0),)),),),
        alpha=alpha,
        weight=(1.0,),
    )


def two_state(alpha=0.5):
    """s0: a0 costs 0 and moves to s1, a1 costs 1 and stays.  s1: one action, cost 1, stays."""
    return ModelSpec(
        grid=StructuredGrid((Node(0, (0.0,)), Node(1, (1.0,)))),
        actions=(
            (Action(0, 0.0, ((1, 1.0),)), Action(1, 1.0, ((0, 1.0),))),
            (Action(0, 1.0, ((1, 1.0),)),),
        ),
        alpha=alpha,
        weight=(1.0, 1.0),
    )


def three_node_envelope():
    """Interiors 0, 1 and boundary 2 with neighbors {0, 1}."""
    nodes = (
        Node(0, (0.0,)),
        Node(1, (1.0,)),
        Node(2, (0.5,), BOUNDARY, (0, 1)),
    )
    acts = tuple((Action(0, 0.0, ((i, 1.0),)),) for i in range(3))
    return ModelSpec(StructuredGrid(nodes), acts, 0.5, (1.0,) * 3)


def random_two_layer(rng, n=None, weight=None):
    """Random grid of interior and boundary nodes satisfying the two-layer property."""
    n = int(rng.integers(1, 51)) if n is None else n
    kinds = rng.random(n) < 0.4
    interior = np.flatnonzero(~kinds)
    if interior.size == 0:
        kinds[0] = False
        interior = np.array([0])
    nodes = []
    for i in range(n):
        if kinds[i]:
            k = int(rng.integers(1, min(4, interior.size) + 1))
            nbrs = tuple(sorted(int(y) for y in rng.choice(interior, size=k, replace=False)))
            nodes.append(Node(i, (float(i),), BOUNDARY, nbrs))
        else:
            nodes.append(Node(i, (float(i),), INTERIOR, ()))
    acts = tuple((Action(0, 0.0, ((i, 1.0),)),) for i in range(n))
    w = tuple(1.0 + rng.random(n)) if weight is None else weight
    return ModelSpec(StructuredGrid(tuple(nodes)), acts, 0.5, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {title}: {detail}")
