import numpy as np
import pytest

from howard_lsc import bench_models
from howard_lsc.errors import CertificateError
from howard_lsc.lyapunov import certify_growth, value_bound, w_norm
from howard_lsc.model import Policy
from howard_lsc.operators import apply_L, apply_Tf, bellman_T, evaluate_policy

from conftest import single_node, two_state

BENCH = {
    "threshold": bench_models.make_threshold_model(11),
    "inventory": bench_models.make_inventory_model(8),
    "queueing": bench_models.make_queueing_model(6),
    "random": bench_models.make_random_finite_mdp(20, 3, 4, seed=7),
}


def random_policy(m, rng):
    return Policy(tuple(int(rng.choice(m.action_ids(x))) for x in range(m.n_states)))


def test_apply_L_examples():
    m = single_node()
    assert apply_L(m, [2.0]).tolist() == [2.0]
    m = two_state()
    assert apply_L(m, [0.0, 0.0]).tolist() == [0.0, 1.0, 1.0]
    assert apply_L(m, [0.0, 2.0]).tolist() == [1.0, 1.0, 2.0]


def test_bellman_T_examples():
    tu, f = bellman_T(single_node(), [0.0])
    assert tu.tolist() == [1.0] and f == Policy((0,))
    tu, f = bellman_T(two_state(), [0.0, 0.0])
    assert tu.tolist() == [0.0, 1.0] and f[0] == 0


def test_ties_go_to_lowest_id():
    _, f = bellman_T(two_state(), [0.0, 2.0])
    assert f[0] == 0


def test_T_deterministic():
    m = BENCH["inventory"]
    u = np.random.default_rng(0).normal(size=m.n_states)
    a, fa = bellman_T(m, u)
    b, fb = bellman_T(m, u)
    assert a.tobytes() == b.tobytes() and fa == fb


@pytest.mark.parametrize("name", sorted(BENCH))
def test_greedy_consistency(name, rng):
    m = BENCH[name]
    for _ in range(20):
        u = rng.normal(scale=10, size=m.n_states)
        tu, f = bellman_T(m, u)
        q = apply_L(m, u)
        arr = m.arrays
        expect = [q[o : o + c].min() for o, c in zip(arr.offsets, arr.counts)]
        assert tu.tolist() == expect
        assert apply_Tf(m, f, u).tolist() == tu.tolist()


@pytest.mark.parametrize("name", sorted(BENCH))
def test_monotone_and_contraction(name, rng):
    m = BENCH[name]
    gamma = certify_growth(m).gamma
    w = m.arrays.weight
    for _ in range(50):
        u = rng.normal(scale=10, size=m.n_states) * w
        v = u + rng.random(m.n_states) * w
        f = random_policy(m, rng)
        assert np.all(bellman_T(m, u)[0] <= bellman_T(m, v)[0])
        assert np.all(apply_Tf(m, f, u) <= apply_Tf(m, f, v))
        d = w_norm(u - v, m)
        assert w_norm(bellman_T(m, u)[0] - bellman_T(m, v)[0], m) <= gamma * d + 1e-10
        assert w_norm(apply_Tf(m, f, u) - apply_Tf(m, f, v), m) <= gamma * d + 1e-10


def test_evaluate_examples():
    assert evaluate_policy(single_node(), Policy((0,)))[0] == pytest.approx(2.0, abs=1e-14)
    v = evaluate_policy(two_state(), Policy((1, 0)))
    np.testing.assert_allclose(v, [2.0, 2.0], atol=1e-14)
    v = evaluate_policy(two_state(), Policy((0, 0)))
    np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-14)


@pytest.mark.parametrize("name", sorted(BENCH))
def test_evaluate_fixed_point_and_bound(name, rng):
    m = BENCH[name]
    cert = certify_growth(m)
    for _ in range(10):
        f = random_policy(m, rng)
        v = evaluate_policy(m, f, "direct")
        assert w_norm(apply_Tf(m, f, v) - v, m) <= 1e-9
        assert w_norm(v, m) <= value_bound(cert) + 1e-9
        vi = evaluate_policy(m, f, "iterative", tol=1e-10)
        assert w_norm(vi - v, m) <= 1e-10 + 1e-12


def test_evaluate_rejects_bad_input():
    m = two_state()
    with pytest.raises(ValueError):
        evaluate_policy(m, Policy((0, 1)))
    with pytest.raises(ValueError):
        evaluate_policy(m, Policy((0, 0)), method="magic")
    bad = bench_models.make_inventory_model(5, weight_scale=1.0)
    with pytest.raises(CertificateError):
        evaluate_policy(bad, bad.first_policy())
