import math

import numpy as np
import pytest
from scipy import integrate, stats

from zimediate.quadrature import adaptive_log_quad


def test_normal_density_integrates_to_one():
    breaks = np.array([[-40.0, -2.0, 0.0, 2.0, 40.0]])
    log_f = lambda t, owner: stats.norm.logpdf(t)
    val, plan = adaptive_log_quad(log_f, breaks, rtol=1e-12)
    assert val[0] == pytest.approx(0.0, abs=1e-12)
    assert plan.n == 1 and plan.n_nodes % 15 == 0


def test_many_integrands_against_scipy():
    rng = np.random.default_rng(0)
    mus = rng.uniform(-3, 3, 25)
    sds = rng.uniform(0.05, 2.0, 25)
    breaks = np.column_stack([mus - 30 * sds, mus, mus + 30 * sds])

    def log_f(t, owner):
        mu, sd = mus[owner][:, None], sds[owner][:, None]
        return stats.norm.logpdf(t, mu, sd) - 0.3 * t * t

    val, _ = adaptive_log_quad(log_f, breaks, rtol=1e-11)
    for i in range(25):
        ref, _ = integrate.quad(lambda u: math.exp(log_f(np.array([[u]]), np.array([i]))[0, 0]),
                                breaks[i, 0], breaks[i, -1], points=[mus[i]], epsrel=1e-13,
                                limit=200)
        assert val[i] == pytest.approx(math.log(ref), abs=1e-10)


def test_plan_reuse_and_posterior():
    breaks = np.array([[0.0, 1.0], [0.0, 2.0]])
    val, plan = adaptive_log_quad(lambda t, o: np.zeros_like(t), breaks)
    assert np.allclose(np.exp(val), [1.0, 2.0])
    out, post = plan.log_integrate(np.log(plan.t))
    # integral of t over [0, b] is b^2 / 2
    assert np.allclose(np.exp(out), [0.5, 2.0])
    assert np.allclose(np.bincount(plan.owner, weights=post), [1.0, 1.0])
    mean_t = plan.expectation(post, plan.t)
    assert np.allclose(mean_t, [2 / 3, 4 / 3])
    assert np.allclose(plan.expectations(post, np.stack([plan.t, plan.t ** 2])),
                       [[2 / 3, 4 / 3], [0.5, 2.0]])


def test_zero_integrand():
    val, _ = adaptive_log_quad(lambda t, o: np.full_like(t, -np.inf), np.array([[0.0, 1.0]]))
    assert val[0] == -np.inf


def test_unsorted_breaks_rejected():
    with pytest.raises(ValueError):
        adaptive_log_quad(lambda t, o: np.zeros_like(t), np.array([[1.0, 0.0]]))
