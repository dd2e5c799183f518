import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from felogit.cmle import fit_cmle
from felogit.localpoly import GammaEstimate, bandwidth_rule, clamp_probabilities, fit_gamma, indicator_matrix, local_poly_fit
from felogit.montecarlo import DgpConfig, generate, true_gamma


def test_constant_response():
    data = generate(DgpConfig(1, 2, 200, 1.0, seed=1, reps=1))
    X = data.x.reshape(data.n, -1)
    z = np.zeros((data.n, 3))
    z[:, 1] = 1.0
    g = GammaEstimate(X, z, 0.5, ell=1)
    np.testing.assert_allclose(g(X[:7]), np.tile([0.0, 1.0, 0.0], (7, 1)), atol=1e-12)


def test_huge_bandwidth_gives_frequencies():
    data = generate(DgpConfig(2, 2, 300, 1.0, seed=2, reps=1))
    freq = np.bincount(data.s.astype(int), minlength=3) / data.n
    est = local_poly_fit(data, [0.1, -0.2], ell=0, h=1e6)
    np.testing.assert_allclose(est, freq, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2**31))
def test_reproduces_polynomials(ell, seed):
    r = np.random.default_rng(seed)
    X = r.uniform(-1, 1, size=(150, 2))
    coef = r.normal(size=3)
    resp = np.full(X.shape[0], coef[0])
    if ell >= 1:
        resp = resp + X @ coef[1:]
    if ell == 2:
        resp = resp + 0.7 * X[:, 0] * X[:, 1] - 0.3 * X[:, 1] ** 2
    g = GammaEstimate(X, np.stack([resp, 1 - resp], axis=1), 0.8, ell)
    q = r.uniform(-0.8, 0.8, size=(5, 2))
    raw = g.fit(q)[0]
    truth = coef[0] + (q @ coef[1:] if ell >= 1 else 0)
    if ell == 2:
        truth = truth + 0.7 * q[:, 0] * q[:, 1] - 0.3 * q[:, 1] ** 2
    np.testing.assert_allclose(raw[:, 0], truth, atol=1e-10)


def test_clamped_rows_are_probabilities():
    r = np.random.default_rng(3)
    out = clamp_probabilities(r.normal(size=(200, 4)), fallback=np.full(4, 0.25))
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_permutation_invariance():
    data = generate(DgpConfig(2, 2, 300, 1.0, seed=4, reps=1))
    perm = np.random.default_rng(5).permutation(data.n)
    q = np.array([[0.1, -0.1], [0.3, 0.2]])
    a = local_poly_fit(data, q, h=0.6)
    b = local_poly_fit(data.subset(perm), q, h=0.6)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_dgp1_accuracy():
    cfg = DgpConfig(1, 2, 10_000, 1.0, seed=6, reps=1)
    data = generate(cfg)
    g = fit_gamma(data, fit_cmle(data))
    q = np.random.default_rng(7).uniform(-0.4, 0.4, size=(100, 2))
    err = np.abs(g(q) - true_gamma(cfg, q))
    assert err.mean() <= 0.03


def test_bandwidth_rule_and_Rn():
    data = generate(DgpConfig(1, 2, 500, 1.0, seed=8, reps=1))
    fit = fit_cmle(data)
    h = bandwidth_rule(data, fit)
    assert h.shape == (3,)
    # standardised scale: x has sd 1/sqrt(12), so raw bandwidths are h / sqrt(12)
    raw = h / np.sqrt(12)
    assert np.all((raw > 0.05) & (raw < 0.6))
    h5 = bandwidth_rule(data, fit, R_n=5.0)
    np.testing.assert_allclose(h, h5)
    h10 = bandwidth_rule(data, fit, R_n=10.0)
    np.testing.assert_allclose(h10 / h5, 2 ** (-1 / (1 * 2 + 4)), rtol=1e-10)


def test_default_Rn_scaling():
    data = generate(DgpConfig(1, 2, 1000, 1.0, seed=9, reps=1))
    fit = fit_cmle(data)
    np.testing.assert_allclose(bandwidth_rule(data, fit), bandwidth_rule(data, fit, R_n=20.0))


def test_indicator_matrix():
    np.testing.assert_array_equal(indicator_matrix(np.array([0, 2, 1]), 2),
                                  [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_unbalanced_rejected():
    data = generate(DgpConfig(1, n=100, seed=2, reps=1, T_values=(2, 3)))
    with pytest.raises(Exception):
        local_poly_fit(data, np.zeros(3))


def test_stayer_covariate_dropped():
    r = np.random.default_rng(10)
    x = np.stack([r.uniform(size=200), np.full(200, 0.3)], axis=1)
    g = GammaEstimate(x, indicator_matrix(r.integers(0, 2, 200), 1), 0.5)
    assert g.d == 1
    assert np.all(np.isfinite(g(x[:3])))
