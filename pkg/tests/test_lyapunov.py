from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from howard_lsc import bench_models
from howard_lsc.errors import CertificateError
from howard_lsc.lyapunov import (
    GrowthCertificate,
    certify_growth,
    check_weight_continuity,
    require_certificate,
    value_bound,
    w_norm,
)
from howard_lsc.model import Action, Policy

from conftest import single_node, three_node_envelope


def _exhaustive(m):
    """Brute-force certificate constants straight from the model tuples."""
    M = 0.0
    beta = 1.0
    for x, acts in enumerate(m.actions):
        for a in acts:
            M = max(M, abs(a.cost) / m.weight[x])
            qw = sum(p * m.weight[y] for y, p in a.transitions)
            beta = max(beta, qw / m.weight[x])
    return M, beta


def test_single_node():
    c = certify_growth(single_node())
    assert (c.M, c.beta, c.gamma, c.passed) == (1.0, 1.0, 0.5, True)


def test_unit_weight_forces_beta_one():
    m = bench_models.make_random_finite_mdp(10, 3, 3, seed=4)
    acts = list(m.actions)
    acts[2] = (replace(acts[2][0], cost=-4.0),) + acts[2][1:]
    m = replace(m, actions=tuple(acts))
    c = certify_growth(m)
    assert c.M == 4.0 and c.beta == 1.0 and c.gamma == m.alpha and c.passed
    assert c.witness_M == (2, 0)


def test_inventory_linear_weight_fails_with_witness():
    m = bench_models.make_inventory_model(weight_scale=1.0)
    c = certify_growth(m)
    M, beta = _exhaustive(m)
    assert not c.passed
    assert c.gamma == pytest.approx(m.alpha * beta, rel=1e-15)
    assert c.beta == pytest.approx(beta, rel=1e-15)
    x, a = c.witness_beta
    act = dict((b.id, b) for b in m.actions[x])[a]
    qw = sum(p * m.weight[y] for y, p in act.transitions)
    assert qw / m.weight[x] == pytest.approx(c.beta, rel=1e-15)
    with pytest.raises(CertificateError, match="gamma >= 1"):
        require_certificate(m)


@pytest.mark.parametrize("name", sorted(bench_models.GENERATORS))
def test_matches_exhaustive_and_minimal(name):
    m = bench_models.GENERATORS[name]()
    c = certify_growth(m)
    M, beta = _exhaustive(m)
    assert c.M == pytest.approx(M, rel=1e-14)
    assert c.beta == pytest.approx(beta, rel=1e-14)
    # minimality: the witness pair attains each constant
    x, a = c.witness_M
    act = dict((b.id, b) for b in m.actions[x])[a]
    assert abs(act.cost) / m.weight[x] == c.M
    assert c.passed


def test_to_dict_keys():
    d = certify_growth(single_node()).to_dict()
    assert set(d) == {"M", "beta", "gamma", "pass", "witness_M", "witness_beta"}
    assert d["witness_M"] == [0, 0]


def test_w_norm_examples():
    m = bench_models.make_queueing_model(5)
    w = m.arrays.weight
    assert w_norm(w, m) == 1.0
    assert w_norm(np.zeros(m.n_states), m) == 0.0
    u = np.where(np.arange(m.n_states) % 2 == 0, 2 * w, 0.0)
    assert w_norm(u, m) == 2.0


vec = arrays(np.float64, 6, elements=st.floats(-1e6, 1e6))


@settings(max_examples=200)
@given(vec, vec, st.floats(-1e3, 1e3))
def test_w_norm_is_a_norm(u, v, c):
    m = bench_models.make_queueing_model(5)
    assert w_norm(c * u, m) == pytest.approx(abs(c) * w_norm(u, m), rel=1e-12, abs=1e-300)
    assert w_norm(u + v, m) <= w_norm(u, m) + w_norm(v, m) + 1e-9
    assert (w_norm(u, m) == 0) == (not np.any(u))


def test_value_bound():
    assert value_bound(GrowthCertificate(1.0, 1.0, 0.5, True, (0, 0), (0, 0))) == 2.0
    assert value_bound(GrowthCertificate(4.0, 1.0, 0.9, True, (0, 0), (0, 0))) == pytest.approx(40.0)


def test_weight_continuity():
    m = three_node_envelope()
    assert check_weight_continuity(m) == []
    bumped = replace(m, weight=(1.0, 1.0, 2.0))
    v = check_weight_continuity(bumped)
    assert v and v[0].location[0] == 2
