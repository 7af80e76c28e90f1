import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlefit.cgf import (BirthDeathOffspring, Concat, Fixed, Gamma, IidSum, LinearMap, ModelSpec, Multinomial,
                           MultivariateNormal, Poisson, Select, Stack, SumIndependent, K3_contract, K4_contract,
                           differentiate_wrt_params, dumps_node, eval_K, grad_t, hess_t, load_model, loads_node,
                           save_model)
from saddlefit.errors import ConfigError, DimensionMismatch, DomainError
from saddlefit.saddlepoint import solve_saddlepoint

from conftest import BUNDLED, central_diff, rel_err

NO_THETA = np.zeros(0)


def gamma51():
    return Gamma(Fixed([5.0, 1.0]))


def bernoulli_half():
    return Multinomial(Fixed([1.0, 0.5, 0.5]))


def inner_point(node, theta, x):
    return 0.5 * solve_saddlepoint(node, theta, x).t_hat


# -- worked values ---------------------------------------------------------------
def test_gamma_values():
    g = gamma51()
    assert eval_K(g, [0.0], NO_THETA) == 0.0
    assert eval_K(g, [0.5], NO_THETA) == pytest.approx(-5 * np.log(0.5), rel=1e-14)
    assert grad_t(g, [0.0], NO_THETA)[0] == pytest.approx(5.0)
    assert grad_t(g, [0.5], NO_THETA)[0] == pytest.approx(10.0)
    assert hess_t(g, [0.0], NO_THETA)[0, 0] == pytest.approx(5.0)
    assert hess_t(g, [0.5], NO_THETA)[0, 0] == pytest.approx(20.0)


def test_gamma_unit_contractions():
    g = Gamma(Fixed([1.0, 1.0]))
    one = np.ones(1)
    assert K3_contract(g, [0.0], NO_THETA, one, one, one) == pytest.approx(2.0)
    assert K4_contract(g, [0.0], NO_THETA, one, one, one, one) == pytest.approx(6.0)


def test_poisson_value():
    p = Poisson(Fixed([2.0]))
    assert eval_K(p, [np.log(2.0)], NO_THETA) == pytest.approx(2.0, rel=1e-14)


def test_multinomial_mean_and_bernoulli_cumulants():
    m = Multinomial(Fixed([10.0, 0.2, 0.3, 0.5]))
    assert np.allclose(grad_t(m, np.zeros(3), NO_THETA), [2.0, 3.0, 5.0])
    b = bernoulli_half()
    e1 = np.array([1.0, 0.0])
    assert abs(K3_contract(b, np.zeros(2), NO_THETA, e1, e1, e1)) < 1e-15
    assert K4_contract(b, np.zeros(2), NO_THETA, e1, e1, e1, e1) == pytest.approx(-0.125, abs=1e-15)


def test_gaussian_higher_cumulants_vanish(rng):
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    node = MultivariateNormal(Fixed([0.3, -1.0]), cov)
    t = rng.normal(size=2)
    v = [rng.normal(size=2) for _ in range(4)]
    assert np.allclose(hess_t(node, t, NO_THETA), cov, atol=0)
    assert K3_contract(node, t, NO_THETA, *v[:3]) == 0.0
    assert K4_contract(node, t, NO_THETA, *v) == 0.0


def test_param_derivative_examples():
    g = Gamma(Stack((Select((0,)), Fixed([1.0]))))
    d = differentiate_wrt_params(eval_K, g, [0.5], [2.0])
    assert d[0] == pytest.approx(-np.log(0.5), rel=1e-14)
    p = Poisson(Select((0,)))
    assert differentiate_wrt_params(eval_K, p, [0.0], [3.0])[0] == 0.0
    m = Multinomial(Select((0, 1, 2, 3)))
    d = differentiate_wrt_params(grad_t, m, np.zeros(3), [10.0, 0.2, 0.3, 0.5])
    assert d[1, 0] == pytest.approx(10.0, rel=1e-14)


# -- generic invariants over every bundled model --------------------------------
def test_K_vanishes_at_zero(bundled):
    _, node, theta, _ = bundled
    assert abs(eval_K(node, np.zeros(node.dim), theta)) <= 1e-14


def test_derivative_chain_matches_finite_differences(bundled, rng):
    _, node, theta, x = bundled
    t = inner_point(node, theta, x)
    vs = [rng.normal(size=node.dim) for _ in range(4)]
    k1 = grad_t(node, t, theta)
    assert rel_err(k1, central_diff(lambda s: eval_K(node, s, theta), t)) <= 1e-6
    k2 = hess_t(node, t, theta)
    assert np.allclose(k2, k2.T, atol=1e-14)
    assert rel_err(k2, central_diff(lambda s: grad_t(node, s, theta), t)) <= 1e-6
    k3 = K3_contract(node, t, theta, *vs[:3])
    fd3 = central_diff(lambda s: vs[0] @ hess_t(node, s, theta) @ vs[1], t) @ vs[2]
    assert rel_err(k3, fd3) <= 1e-6
    k4 = K4_contract(node, t, theta, *vs)
    fd4 = central_diff(lambda s: K3_contract(node, s, theta, *vs[:3]), t) @ vs[3]
    assert rel_err(k4, fd4) <= 1e-6


def test_contractions_are_symmetric(bundled, rng):
    _, node, theta, x = bundled
    t = inner_point(node, theta, x)
    vs = [rng.normal(size=node.dim) for _ in range(4)]
    k3 = [K3_contract(node, t, theta, *p) for p in itertools.permutations(vs[:3])]
    assert np.ptp(k3) <= 1e-12 * max(1.0, abs(k3[0]))
    k4 = [K4_contract(node, t, theta, *p) for p in itertools.permutations(vs)]
    assert np.ptp(k4) <= 1e-12 * max(1.0, abs(k4[0]))


def test_contractions_are_multilinear(bundled, rng):
    _, node, theta, x = bundled
    t = inner_point(node, theta, x)
    a, b, c, e = (rng.normal(size=node.dim) for _ in range(4))
    lhs = K3_contract(node, t, theta, 2 * a + e, b, c)
    rhs = 2 * K3_contract(node, t, theta, a, b, c) + K3_contract(node, t, theta, e, b, c)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_batched_contractions_match_loops(bundled, rng):
    _, node, theta, x = bundled
    t = inner_point(node, theta, x)
    v = rng.normal(size=(node.dim, 5))
    w = rng.normal(size=node.dim)
    batched = K4_contract(node, t, theta, v, v, w, w)
    loop = [K4_contract(node, t, theta, v[:, j], v[:, j], w, w) for j in range(5)]
    assert np.allclose(batched, loop, rtol=1e-12, atol=1e-12)


def test_param_derivatives_match_finite_differences(bundled, rng):
    _, node, theta, x = bundled
    t = inner_point(node, theta, x)
    v = rng.normal(size=node.dim)
    for f, args in ((eval_K, ()), (grad_t, ()), (hess_t, ()), (K3_contract, (v, v, v)), (K4_contract, (v,) * 4)):
        exact = differentiate_wrt_params(f, node, t, theta, *args)
        fd = central_diff(lambda th: f(node, t, th, *args), theta)
        assert rel_err(exact, fd) <= 1e-6, f.__name__


def test_total_derivative_through_t_seed():
    node = Gamma(Select((0, 1)))
    theta = np.array([2.0, 1.5])
    dt = np.array([[0.3], [-0.7]])
    exact = differentiate_wrt_params(eval_K, node, [0.2], theta, t_seed=dt)
    fd = central_diff(lambda th: eval_K(node, [0.2 + dt[:, 0] @ (th - theta)], th), theta)
    assert np.allclose(exact, fd, rtol=1e-7)


# -- combinators -----------------------------------------------------------------
def test_linear_map_identity_reproduces_child(bundled, rng):
    _, node, theta, x = bundled
    if node.singular:
        pytest.skip("singular nodes are only used beneath a map")
    mapped = LinearMap(np.eye(node.dim), node)
    t = inner_point(node, theta, x)
    vs = [rng.normal(size=node.dim) for _ in range(4)]
    assert abs(eval_K(mapped, t, theta) - eval_K(node, t, theta)) <= 1e-14 * max(1, abs(eval_K(node, t, theta)))
    assert np.allclose(grad_t(mapped, t, theta), grad_t(node, t, theta), rtol=1e-14, atol=1e-14)
    assert np.allclose(hess_t(mapped, t, theta), hess_t(node, t, theta), rtol=1e-14, atol=1e-14)
    assert K3_contract(mapped, t, theta, *vs[:3]) == pytest.approx(K3_contract(node, t, theta, *vs[:3]), rel=1e-14)
    assert K4_contract(mapped, t, theta, *vs) == pytest.approx(K4_contract(node, t, theta, *vs), rel=1e-14)


@pytest.mark.parametrize("n", [2.0, 10.0, 1000.0, 7.5])
def test_iid_sum_scales_every_operator(n, rng):
    child = Gamma(Select((0, 1)))
    node = IidSum(n, child)
    theta = np.array([2.0, 1.3])
    t = np.array([0.4])
    v = rng.normal(size=(4, 1))
    pairs = ((eval_K, ()), (grad_t, ()), (hess_t, ()), (K3_contract, tuple(v[:3])), (K4_contract, tuple(v)))
    for f, args in pairs:
        a = np.asarray(f(node, t, theta, *args))
        b = n * np.asarray(f(child, t, theta, *args))
        assert np.allclose(a, b, rtol=1e-13, atol=0), f.__name__


def test_iid_sum_by_hand():
    node = IidSum(7.0, Gamma(Stack((Select((0,)), Fixed([1.0])))))
    for t in (-1.0, 0.3, 0.8):
        assert eval_K(node, [t], [1.7]) == pytest.approx(-7 * 1.7 * np.log(1 - t), rel=1e-14)


def test_iid_sum_count_from_parameters():
    node = IidSum(Select((1,)), Poisson(Select((0,))))
    assert eval_K(node, [0.5], [2.0, 3.0]) == pytest.approx(3.0 * 2.0 * np.expm1(0.5))
    d = differentiate_wrt_params(eval_K, node, [0.5], [2.0, 3.0])
    assert np.allclose(d, [3.0 * np.expm1(0.5), 2.0 * np.expm1(0.5)])


def test_concat_and_sum_independent():
    a, b = Gamma(Fixed([2.0, 1.0])), Poisson(Fixed([1.5]))
    cat = Concat((a, b))
    t = np.array([0.2, -0.4])
    assert eval_K(cat, t, NO_THETA) == pytest.approx(eval_K(a, t[:1], NO_THETA) + eval_K(b, t[1:], NO_THETA))
    k2 = hess_t(cat, t, NO_THETA)
    assert k2[0, 1] == 0.0 and k2[1, 0] == 0.0
    s = SumIndependent((a, b))
    assert grad_t(s, [0.1], NO_THETA)[0] == pytest.approx(2 / 0.9 + 1.5 * np.exp(0.1))


def test_sum_independent_dimension_check():
    with pytest.raises(ConfigError):
        SumIndependent((Gamma(Fixed([1.0, 1.0])), MultivariateNormal(Fixed([0.0, 0.0]), np.eye(2))))


# -- birth-death offspring -------------------------------------------------------
def classical_birth_death_K(t, lam, mu):
    s = np.exp(t)
    e = np.exp(-(lam - mu))
    return np.log((mu * (s - 1) - e * (lam * s - mu)) / (lam * (s - 1) - e * (lam * s - mu)))


@given(lam=st.floats(0.05, 2.0), mu=st.floats(0.05, 2.0), t=st.floats(-1.0, 0.2))
@settings(max_examples=60)
def test_birth_death_matches_classical_formula(lam, mu, t):
    if abs(lam - mu) < 1e-3:
        return
    node = BirthDeathOffspring(Select((0, 1)))
    theta = np.array([lam, mu])
    if not node.in_domain(np.array([t]), theta):
        return
    assert eval_K(node, [t], theta) == pytest.approx(classical_birth_death_K(t, lam, mu), rel=1e-9, abs=1e-12)


def test_birth_death_mean_and_equal_rates():
    node = BirthDeathOffspring(Select((0, 1)))
    assert grad_t(node, [0.0], [0.7, 0.2])[0] == pytest.approx(np.exp(0.5), rel=1e-14)
    k_eq = eval_K(node, [0.1], [0.4, 0.4])
    k_near = eval_K(node, [0.1], [0.4 + 1e-7, 0.4])
    assert np.isfinite(k_eq) and k_eq == pytest.approx(k_near, rel=1e-6)
    # variance at time one of the critical process is 2 lambda
    assert hess_t(node, [0.0], [0.4, 0.4])[0, 0] == pytest.approx(0.8, rel=1e-12)


def test_birth_death_monte_carlo_mean():
    lam, mu = 0.6, 0.25
    r = lam - mu
    er = np.exp(r)
    a = mu * (er - 1) / (lam * er - mu)
    b = lam * (er - 1) / (lam * er - mu)
    rng = np.random.default_rng(7)
    alive = rng.random(200_000) > a
    z = np.where(alive, rng.geometric(1 - b, size=alive.shape[0]), 0)
    node = BirthDeathOffspring(Select((0, 1)))
    mean = grad_t(node, [0.0], [lam, mu])[0]
    var = hess_t(node, [0.0], [lam, mu])[0, 0]
    assert abs(z.mean() - mean) < 4 * np.sqrt(var / z.shape[0])
    assert z.var() == pytest.approx(var, rel=0.03)


# -- errors ----------------------------------------------------------------------
def test_domain_and_dimension_errors():
    g = gamma51()
    with pytest.raises(DomainError):
        eval_K(g, [1.0], NO_THETA)
    with pytest.raises(DimensionMismatch):
        eval_K(g, [0.1, 0.2], NO_THETA)
    with pytest.raises(DomainError):
        eval_K(Gamma(Select((0, 1))), [0.1], [-1.0, 1.0])
    with pytest.raises(DomainError):
        grad_t(Multinomial(Fixed([5.0, 0.3, 0.3])), np.zeros(2), NO_THETA)
    with pytest.raises(DomainError):
        eval_K(g, [np.nan], NO_THETA)


# -- serialization ---------------------------------------------------------------
def test_json_round_trip_is_lossless(bundled, rng, tmp_path):
    _, node, theta, x = bundled
    text = dumps_node(node)
    again = loads_node(text)
    assert dumps_node(again) == text
    t = inner_point(node, theta, x)
    v = rng.normal(size=node.dim)
    assert eval_K(again, t, theta) == eval_K(node, t, theta)
    assert K4_contract(again, t, theta, v, v, v, v) == K4_contract(node, t, theta, v, v, v, v)
    names = tuple(f"th{i}" for i in range(theta.shape[0]))
    spec = ModelSpec(node, names, ("real",) * len(names), theta)
    path = tmp_path / "model.json"
    save_model(spec, path)
    loaded = load_model(path)
    assert loaded.names == names and np.array_equal(loaded.theta0, theta)
    assert json.loads(path.read_text())["node"] == json.loads(text)


def test_malformed_model_documents(tmp_path):
    with pytest.raises(ConfigError):
        loads_node('{"kind": "nonsense"}')
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_model(p)
    p.write_text(json.dumps({"node": {"kind": "poisson", "rate": {"kind": "select", "indices": [0]}},
                             "parameters": [{"name": "a"}], "theta0": [1.0, 2.0]}))
    with pytest.raises(ConfigError):
        load_model(p)
