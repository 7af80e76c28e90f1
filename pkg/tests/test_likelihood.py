import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln
from scipy.stats import multivariate_normal

from saddlefit.cgf import Concat, Fixed, Gamma, IidSum, MultivariateNormal, Select, Stack
from saddlefit.errors import DimensionTooLarge
from saddlefit.likelihood import (correction_T, correction_T_direct, spa_loglik, spa_loglik2, spa_loglik_grad,
                                  spa_loglik_hess)
from saddlefit.models import build_gamma_fixed_rate, build_mvgamma, stirling_remainder, true_loglik_gamma
from saddlefit.saddlepoint import solve_saddlepoint

from conftest import central_diff, random_gamma_concat, rel_err

NO_THETA = np.zeros(0)
GAMMA = build_gamma_fixed_rate(1.0)


def test_gamma_at_mean():
    node = Gamma(Fixed([5.0, 1.0]))
    want = -0.5 * np.log(2 * np.pi * 5)
    assert spa_loglik(node, NO_THETA, [5.0]) == pytest.approx(want, abs=1e-14)
    assert spa_loglik2(node, NO_THETA, [5.0]) == pytest.approx(want - 1.0 / 60, abs=1e-14)


def test_closed_form_gamma_loglik():
    # (1 - alpha) log(1 - t) - t x - log(2 pi alpha) / 2 with t = 1 - alpha / x
    for alpha, x in ((2.0, 1.58177), (0.7, 3.0), (12.0, 9.0)):
        t = 1 - alpha / x
        want = (1 - alpha) * np.log(1 - t) - t * x - 0.5 * np.log(2 * np.pi * alpha)
        assert spa_loglik(GAMMA, [alpha], [x]) == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("alpha", np.concatenate([np.linspace(0.5, 5, 10), np.geomspace(5, 100, 10)]))
def test_stirling_identity(alpha):
    for x in (0.3, 2.0, 17.0):
        diff = spa_loglik(GAMMA, [alpha], [x]) - true_loglik_gamma(alpha, [x])
        want = gammaln(alpha) - ((alpha - 0.5) * np.log(alpha) - alpha + 0.5 * np.log(2 * np.pi))
        assert diff == pytest.approx(want, abs=1e-10)
        assert stirling_remainder(alpha) == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("alpha", np.geomspace(0.5, 50, 25))
def test_second_order_is_closer_for_gamma(alpha):
    x = [1.7]
    exact = true_loglik_gamma(alpha, x)
    assert abs(spa_loglik2(GAMMA, [alpha], x) - exact) < abs(spa_loglik(GAMMA, [alpha], x) - exact)


def test_gaussian_exactness_randomized(rng):
    for _ in range(100):
        d = rng.integers(1, 5)
        m = rng.normal(size=(d, d))
        cov = m @ m.T + 0.2 * np.eye(d)
        mu = rng.normal(size=d)
        x = rng.normal(size=d) * 2
        node = MultivariateNormal(Select(tuple(range(d))), cov)
        exact = multivariate_normal(mu, cov).logpdf(x)
        assert abs(spa_loglik(node, mu, x) - exact) <= 1e-12
        assert abs(correction_T(node, solve_saddlepoint(node, mu, x), mu)) <= 1e-14
        assert spa_loglik2(node, mu, x) == spa_loglik(node, mu, x)


def test_gaussian_score_and_hessian():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    node = MultivariateNormal(Select((0, 1)), cov)
    mu, x = np.array([0.2, -0.4]), np.array([1.0, 0.5])
    prec = np.linalg.inv(cov)
    assert np.allclose(spa_loglik_grad(node, mu, x), (x - mu) @ prec, rtol=1e-12)
    assert np.allclose(spa_loglik_hess(node, mu, x), -prec, rtol=1e-6)
    assert np.allclose(spa_loglik_hess(node, mu, x, method="dual"), -prec, rtol=1e-12)


def test_gamma_gradient_and_hessian_closed_forms():
    for alpha, x in ((2.0248, 1.58177), (0.8, 4.0)):
        g = spa_loglik_grad(GAMMA, [alpha], [x])[0]
        assert g == pytest.approx(np.log(x) - np.log(alpha) + 1 / (2 * alpha), rel=1e-12)
        h = spa_loglik_hess(GAMMA, [alpha], [x], method="dual")[0, 0]
        assert h == pytest.approx(-1 / alpha - 1 / (2 * alpha**2), rel=1e-12)
    assert spa_loglik_hess(GAMMA, [2.0248], [1.58177])[0, 0] == pytest.approx(-0.61580, abs=5e-5)


@pytest.mark.parametrize("n", [1.0, 10.0, 250.0])
def test_iid_gamma_hessian(n):
    node = build_gamma_fixed_rate(n)
    alpha, u = 1.7, 1.3
    h = spa_loglik_hess(node, [alpha], [n * u], method="dual")[0, 0]
    assert h == pytest.approx(-n / alpha - 1 / (2 * alpha**2), rel=1e-12)


def test_gradient_routes_agree_with_finite_differences(bundled):
    _, node, theta, x = bundled
    closed = spa_loglik_grad(node, theta, x, method="closed")
    dual = spa_loglik_grad(node, theta, x, method="dual")
    fd = central_diff(lambda th: spa_loglik(node, th, x), theta)
    assert rel_err(closed, dual) <= 1e-10
    assert rel_err(closed, fd) <= 1e-6


def test_hessian_routes_agree(bundled):
    _, node, theta, x = bundled
    h_fd = spa_loglik_hess(node, theta, x, method="fd")
    h_dual = spa_loglik_hess(node, theta, x, method="dual")
    assert np.allclose(h_fd, h_fd.T, atol=0)
    assert np.allclose(h_dual, h_dual.T, rtol=1e-8, atol=1e-10)
    assert rel_err(h_fd, h_dual) <= 1e-6
    fd = central_diff(lambda th: spa_loglik_grad(node, th, x), theta)
    assert rel_err(h_dual, 0.5 * (fd + fd.T)) <= 1e-6


# -- correction term -----------------------------------------------------------
@given(alpha=st.floats(0.2, 80.0), x=st.floats(0.05, 50.0))
@settings(max_examples=60)
def test_gamma_correction_is_constant_in_x(alpha, x):
    sol = solve_saddlepoint(GAMMA, [alpha], [x])
    assert correction_T(GAMMA, sol, [alpha]) == pytest.approx(-1 / (12 * alpha), rel=1e-10)


def test_gamma_correction_value():
    sol = solve_saddlepoint(Gamma(Fixed([5.0, 1.0])), NO_THETA, [3.0])
    assert correction_T(Gamma(Fixed([5.0, 1.0])), sol, NO_THETA) == pytest.approx(-1 / 60, rel=1e-12)


def test_concat_correction_is_additive():
    node = Concat((Gamma(Fixed([2.0, 1.0])), Gamma(Fixed([3.0, 1.0]))))
    x = np.array([1.5, 4.0])
    sol = solve_saddlepoint(node, NO_THETA, x)
    assert correction_T(node, sol, NO_THETA) == pytest.approx(-5 / 72, rel=1e-12)
    assert correction_T_direct(node, sol, NO_THETA) == pytest.approx(-5 / 72, rel=1e-12)


def test_block_additivity(rng):
    node, theta, x = random_gamma_concat(rng, 3)
    parts = [Gamma(Select((2 * i, 2 * i + 1))) for i in range(3)]
    sol = solve_saddlepoint(node, theta, x)
    t_sum = sum(correction_T(p, solve_saddlepoint(p, theta, x[i:i + 1]), theta) for i, p in enumerate(parts))
    l_sum = sum(spa_loglik(p, theta, x[i:i + 1]) for i, p in enumerate(parts))
    assert correction_T(node, sol, theta) == pytest.approx(t_sum, abs=1e-12)
    assert spa_loglik(node, theta, x) == pytest.approx(l_sum, abs=1e-12)


def test_ldl_form_matches_direct_sums(bundled):
    _, node, theta, x = bundled
    if node.dim > 8:
        pytest.skip("direct oracle is limited to d <= 8")
    sol = solve_saddlepoint(node, theta, x)
    a = correction_T(node, sol, theta)
    b = correction_T_direct(node, sol, theta)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_direct_oracle_refuses_large_dimension():
    node = build_mvgamma(3, 3)
    theta = np.array([1.0, 2.0, 3.0, 1.0])
    x = np.repeat([1.0, 2.0, 3.0], 3)
    with pytest.raises(DimensionTooLarge):
        correction_T_direct(node, solve_saddlepoint(node, theta, x), theta)


@pytest.mark.parametrize("n", [2.0, 10.0, 1000.0])
def test_correction_scales_with_iid_count(n):
    for child, theta, u in ((Gamma(Stack((Select((0,)), Fixed([1.0])))), np.array([1.7]), np.array([2.3])),
                            (build_mvgamma(2, 2), np.array([1.5, 3.0, 1.2]), np.array([1.1, 2.0, 3.5, 2.2]))):
        node = IidSum(n, child)
        tx = correction_T(node, solve_saddlepoint(node, theta, n * u), theta)
        tu = correction_T(child, solve_saddlepoint(child, theta, u), theta)
        assert tx == pytest.approx(tu / n, rel=1e-12)
