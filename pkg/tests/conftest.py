import numpy as np
import pytest
from scipy.stats import binom, nbinom

from saddlefit.cgf import (Affine, Concat, Fixed, Gamma, LinearMap, Multinomial,
                           MultivariateNormal, Poisson, Select, Stack, SumIndependent, grad_t)
from saddlefit.models import TrajectoryModel, build_birth_death, build_gamma_fixed_rate, build_mtalpha, build_mvgamma


def multinomial_toy():
    """Three-cell multinomial seen through a 2 x 3 map; theta = (N, p1, p2), p3 = 1 - p1 - p2."""
    p = Stack((Select((0, 1, 2)), Affine(Select((1, 2)), [[-1.0, -1.0]], [1.0])))
    return LinearMap([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]], Multinomial(p))


def _shifted_mean(node, theta, scale):
    mean = np.asarray(grad_t(node, np.zeros(node.dim), theta), dtype=float)
    return mean * scale


def bundled_cases():
    """(name, node, theta, x) for every model builder, at points where the saddlepoint exists."""
    cases = []
    cases.append(("gamma", build_gamma_fixed_rate(1.0), np.array([2.0]), np.array([1.58177])))
    cases.append(("gamma_n10", build_gamma_fixed_rate(10.0), np.array([1.3]), np.array([14.1])))
    node = Gamma(Select((0, 1)))
    cases.append(("gamma_shape_rate", node, np.array([2.5, 1.7]), np.array([1.1])))
    node = build_mvgamma(2, 2)
    cases.append(("mvgamma", node, np.array([1.5, 3.0, 1.2]), np.array([1.1, 2.0, 3.5, 2.2])))
    node = build_mvgamma(2, 2, n=5.0)
    cases.append(("mvgamma_n5", node, np.array([1.5, 3.0, 1.2]), np.array([7.0, 8.1, 16.0, 14.0])))
    node = Poisson(Select((0,)))
    cases.append(("poisson", node, np.array([2.0]), np.array([3.0])))
    node = MultivariateNormal(Select((0, 1)), [[2.0, 0.3], [0.3, 1.0]])
    cases.append(("mvn", node, np.array([0.2, -0.4]), np.array([1.0, 0.5])))
    node = SumIndependent((Gamma(Stack((Select((0,)), Fixed([2.0])))), Poisson(Select((1,)))))
    cases.append(("sum_independent", node, np.array([1.5, 0.7]), np.array([2.4])))
    node = multinomial_toy()
    theta = np.array([12.0, 0.3, 0.45])
    cases.append(("multinomial_toy", node, theta, _shifted_mean(node, theta, [1.2, 0.9])))
    node, _ = build_mtalpha(2)
    theta = np.array([20.0, 0.8, 0.5, 0.6])
    cases.append(("mtalpha2", node, theta, _shifted_mean(node, theta, [1.1, 0.9, 1.05])))
    node, _ = build_mtalpha(3)
    theta = np.array([40.0, 0.85, 0.4, 0.5, 0.6])
    cases.append(("mtalpha3", node, theta, _shifted_mean(node, theta, 1.0 + 0.1 * np.sin(np.arange(7)))))
    traj = TrajectoryModel([10, 12, 15, 14, 19])
    cases.append(("birth_death", build_birth_death(traj), np.array([0.5, 0.3]), traj.observation))
    return cases


BUNDLED = bundled_cases()


@pytest.fixture(params=BUNDLED, ids=[c[0] for c in BUNDLED])
def bundled(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_diff(f, x, h=None):
    """Central differences of ``f`` (scalar or array valued) at vector ``x``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = np.finfo(float).eps ** (1 / 3) * (1.0 + np.abs(x))
    cols = []
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(f(x + e), dtype=float) - np.asarray(f(x - e), dtype=float)) / (2 * h[i]))
    return np.array(cols)


def rel_err(a, b):
    """Norm-relative error; absolute when the reference is essentially zero."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = float(np.linalg.norm(b))
    return float(np.linalg.norm(a - b)) / (scale if scale > 1e-8 else 1.0)


def random_gamma_concat(rng, d):
    """Concat of d Gamma(shape, rate) nodes with all parameters free; returns (node, theta, x)."""
    node = Concat(tuple(Gamma(Select((2 * i, 2 * i + 1))) for i in range(d)))
    theta = np.empty(2 * d)
    theta[0::2] = rng.uniform(0.5, 4.0, d)
    theta[1::2] = rng.uniform(0.5, 2.0, d)
    x = theta[0::2] / theta[1::2] * rng.uniform(0.6, 1.6, d)
    return node, theta, x



def birth_death_exact_loglik(theta, counts):
    """Exact log-likelihood of unit-time transitions of a linear birth-death process."""
    lam, mu = theta
    r = lam - mu
    if abs(r) < 1e-10:
        a = b = lam / (1 + lam)
    else:
        den = lam * np.exp(r) - mu
        a, b = mu * np.expm1(r) / den, lam * np.expm1(r) / den
    total = 0.0
    for i, j in zip(counts[:-1], counts[1:]):
        m = np.arange(1, min(i, j) + 1)
        terms = binom.logpmf(m, i, 1 - a) + nbinom.logpmf(j - m, m, 1 - b)
        if j == 0:
            terms = np.array([binom.logpmf(0, i, 1 - a)])
        total += float(np.logaddexp.reduce(terms))
    return total


def simulate_birth_death(lam, mu, z0, steps, seed):
    """Unit-time transitions: survivors are binomial, each survivor leaves 1 + geometric descendants."""
    rng = np.random.default_rng(seed)
    r = lam - mu
    den = lam * np.exp(r) - mu
    a, b = mu * np.expm1(r) / den, lam * np.expm1(r) / den
    z = [z0]
    for _ in range(steps):
        alive = rng.binomial(z[-1], 1 - a)
        z.append(alive + (rng.negative_binomial(alive, 1 - b) if alive > 0 else 0))
    return z


# -- acceptance reporting -------------------------------------------------------
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """``check(ok, detail)`` records one PASS/FAIL line for the running criterion and asserts ``ok``."""
    name = request.node.name

    def check(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
