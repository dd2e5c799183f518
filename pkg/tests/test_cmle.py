from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from felogit.cmle import cond_loglik, esp, fit_cmle, panel_loglik, symmetric_sums
from felogit.errors import IdentificationError, NonConvergenceError
from felogit.montecarlo import DgpConfig, generate
from felogit.panel import PanelDataset, PanelUnit


def brute_sums(x, beta):
    """C_k by enumerating every subset of periods."""
    xb = np.asarray(x, float).reshape(len(x), -1) @ np.atleast_1d(beta)
    T = len(xb)
    return np.array([sum(np.exp(xb[list(A)].sum()) for A in combinations(range(T), k)) for k in range(T + 1)])


def brute_loglik(y, x, beta):
    xb = np.asarray(x, float).reshape(len(x), -1) @ np.atleast_1d(beta)
    return float(y @ xb - np.log(brute_sums(x, beta)[int(y.sum())]))


def test_sums_beta_zero():
    np.testing.assert_allclose(symmetric_sums(np.random.default_rng(0).normal(size=(3, 2)), np.zeros(2)), [1, 3, 3, 1])


def test_sums_hand_example():
    np.testing.assert_allclose(symmetric_sums(np.array([[0.0], [np.log(2)]]), [1.0]), [1, 3, 2], rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**31))
def test_sums_match_enumeration(T, p, seed):
    r = np.random.default_rng(seed)
    x, beta = r.normal(size=(T, p)), r.normal(size=p)
    np.testing.assert_allclose(symmetric_sums(x, beta), brute_sums(x, beta), rtol=1e-12)


def test_esp_batch_shape():
    w = np.random.default_rng(1).uniform(size=(4, 5))
    e = esp(w)
    assert e.shape == (4, 6)
    np.testing.assert_allclose(e[:, 1], w.sum(axis=1))
    np.testing.assert_allclose(e[:, -1], w.prod(axis=1))


def test_loglik_hand_example():
    unit = PanelUnit(0, np.array([1.0, 0.0]), np.array([[0.0], [np.log(2)]]))
    assert cond_loglik(unit, [1.0]) == pytest.approx(-np.log(3), abs=1e-12)


@pytest.mark.parametrize("ys", [[0, 0, 0], [1, 1, 1]])
def test_loglik_degenerate(ys):
    x = np.random.default_rng(2).normal(size=(3, 2))
    val, g, h = cond_loglik(PanelUnit(0, np.array(ys, float), x), [0.4, -1.0], derivs=True)
    assert val == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)
    np.testing.assert_allclose(h, 0.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_loglik_gradient_hessian_fd(T, p, seed):
    r = np.random.default_rng(seed)
    x, beta = r.normal(size=(T, p)), r.normal(size=p)
    y = r.integers(0, 2, size=T).astype(float)
    unit = PanelUnit(0, y, x)
    val, g, H = cond_loglik(unit, beta, derivs=True)
    assert val == pytest.approx(brute_loglik(y, x, beta), abs=1e-10)
    step = 1e-5
    for j in range(p):
        e = np.zeros(p)
        e[j] = step
        fd = (cond_loglik(unit, beta + e) - cond_loglik(unit, beta - e)) / (2 * step)
        assert g[j] == pytest.approx(fd, abs=1e-6)
        gp = cond_loglik(unit, beta + e, derivs=True)[1]
        gm = cond_loglik(unit, beta - e, derivs=True)[1]
        np.testing.assert_allclose(H[:, j], (gp - gm) / (2 * step), atol=1e-4)
    assert np.linalg.eigvalsh(H).max() <= 1e-10


def test_fit_dgp1_large():
    data = generate(DgpConfig(1, 2, 10000, 1.0, seed=8, reps=1))
    fit = fit_cmle(data)
    assert fit.converged
    assert abs(fit.beta_hat[0] - 1.0) <= 3 * fit.se[0]
    np.testing.assert_allclose(fit.phi.mean(axis=0), 0.0, atol=1e-8)
    emp = fit.phi.T @ fit.phi / fit.n
    np.testing.assert_allclose(emp, fit.info_inv, rtol=0.1)


def test_fit_flat_likelihood():
    x = np.random.default_rng(3).normal(size=(50, 3))
    y = np.repeat(np.random.default_rng(4).integers(0, 2, size=(50, 1)), 3, axis=1)
    with pytest.raises(NonConvergenceError):
        fit_cmle(PanelDataset(y, x))


def test_fit_rank_failure():
    x = np.repeat(np.random.default_rng(3).normal(size=(50, 1)), 3, axis=1)
    y = np.random.default_rng(4).integers(0, 2, size=(50, 3))
    with pytest.raises(IdentificationError):
        fit_cmle(PanelDataset(y, x))


def test_fit_shift_invariance(dgp2_t3):
    data, fit = dgp2_t3
    shift = np.random.default_rng(6).normal(size=(data.n, 1, data.p)) * 3
    moved = PanelDataset(data.y, data.x + shift)
    np.testing.assert_allclose(fit_cmle(moved).beta_hat, fit.beta_hat, atol=1e-8)


def test_fit_concave_along_path(dgp2_t3):
    data, fit = dgp2_t3
    path = np.linspace(0, 2 * fit.beta_hat[0], 15)
    lls = []
    for b in path:
        ll, _, h = panel_loglik(data, [b])
        assert np.linalg.eigvalsh(h.sum(axis=0)).max() <= 1e-9
        lls.append(ll.sum())
    assert np.argmax(lls) == 7


def test_fit_multivariate():
    r = np.random.default_rng(9)
    n, T = 4000, 3
    x = r.uniform(-1, 1, size=(n, T, 2))
    alpha = r.normal(size=n)
    y = (x @ np.array([1.0, -0.5]) + alpha[:, None] + r.logistic(size=(n, T)) >= 0).astype(float)
    fit = fit_cmle(PanelDataset(y, x))
    assert np.all(np.abs(fit.beta_hat - [1.0, -0.5]) <= 4 * fit.se)
