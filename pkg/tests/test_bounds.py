import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit
from scipy.stats import norm

from felogit.bounds import (
    BoundsEstimate,
    ConfidenceInterval,
    ProjectionConfig,
    bounds_pieces,
    ci1,
    estimate_bounds,
    im_critical_value,
    population_bounds,
    width_bound,
)
from felogit.cmle import esp, fit_cmle
from felogit.errors import ValidationError
from felogit.localpoly import fit_gamma
from felogit.montecarlo import DgpConfig, generate, oracle_gamma
from felogit.panel import PanelDataset
from felogit.targets import EffectTarget


def _dirac_gamma(x, beta, alpha):
    idx = x * beta + alpha[:, None]
    return esp(np.exp(idx)) * np.prod(expit(-idx), axis=1, keepdims=True)


def test_dgp1_single_sample(dgp1_t2):
    data, fit = dgp1_t2
    est = estimate_bounds(data, fit)
    assert est.lower <= est.upper
    assert abs(est.lower - 0.25) <= 3 * est.se[0] + 0.05
    assert est.diagnostics["derivative_check"] < 1e-4
    # the gamma correction averages to zero only asymptotically
    assert np.all(np.abs(est.psi.mean(axis=0)) <= 0.05 * est.psi.std(axis=0))


def test_beta_zero_gives_zero(dgp1_t2):
    data, fit = dgp1_t2
    est = estimate_bounds(data, fit.with_beta([0.0]), check=False)
    assert est.lower == 0.0 and est.upper == 0.0


def test_dgp2_population_scale():
    cfg = DgpConfig(2, 2, 100_000, 1.0, seed=12, reps=1)
    data = generate(cfg)
    fit = fit_cmle(data).with_beta([1.0])
    est = estimate_bounds(data, fit, gamma=oracle_gamma(cfg, data), check=False)
    assert abs(est.lower - 0.2006) <= 0.01 and abs(est.upper - 0.2124) <= 0.01


@pytest.mark.parametrize("T", [2, 3, 4])
def test_degenerate_alpha_point_identified(T):
    r = np.random.default_rng(T)
    x = r.uniform(-0.5, 0.5, size=(200, T))
    beta = 1.0
    alpha = -x[:, -1] * beta + r.choice([-0.5, 0.8], size=200)
    gam = _dirac_gamma(x, beta, alpha)
    h = population_bounds(x, gam, [beta])
    u = expit(x[:, -1] * beta + alpha)
    np.testing.assert_allclose(h[:, 0], beta * u * (1 - u), atol=1e-8)
    np.testing.assert_allclose(h[:, 1], beta * u * (1 - u), atol=1e-8)
    x0 = (0.1,)
    h = population_bounds(x, gam, [beta], EffectTarget("asf", x0=x0))
    np.testing.assert_allclose(h, np.repeat(expit(0.1 * beta + alpha)[:, None], 2, axis=1), atol=1e-8)


def _random_panel(seed, n=150, T=2):
    r = np.random.default_rng(seed)
    x = r.uniform(-0.5, 0.5, size=(n, T))
    alpha = r.normal(scale=r.uniform(0.1, 2), size=n) - x[:, -1] * r.uniform(-2, 2)
    y = (x * r.uniform(-2, 2) + alpha[:, None] + r.logistic(size=(n, T)) >= 0).astype(float)
    return PanelDataset(y, x)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([2, 3]))
def test_lower_le_upper_and_width(seed, T):
    data = _random_panel(seed, T=T)
    fit = fit_cmle(data)
    pc = bounds_pieces(data, fit.beta_hat, EffectTarget("ame"), None, fit, check=False)
    lower, upper = pc.h.mean(axis=0)
    assert lower <= upper + 1e-12
    assert upper - lower <= width_bound(pc) + 1e-10


def test_sign_flip_symmetry(dgp2_t3):
    data, fit = dgp2_t3
    flipped = PanelDataset(data.y, -data.x)
    ffit = fit_cmle(flipped)
    np.testing.assert_allclose(ffit.beta_hat, -fit.beta_hat, atol=1e-8)
    a = estimate_bounds(data, fit, check=False)
    b = estimate_bounds(flipped, ffit, check=False)
    assert b.lower == pytest.approx(-a.upper, abs=1e-8)
    assert b.upper == pytest.approx(-a.lower, abs=1e-8)


def test_sigma_permutation_invariant(dgp2_t3):
    data, fit = dgp2_t3
    perm = np.random.default_rng(1).permutation(data.n)
    sub = data.subset(perm)
    a = estimate_bounds(data, fit, check=False)
    b = estimate_bounds(sub, fit_cmle(sub), check=False)
    np.testing.assert_allclose(b.sigma, a.sigma, rtol=1e-8)
    assert (b.lower, b.upper) == pytest.approx((a.lower, a.upper), abs=1e-10)


def test_projection_rules_run(dgp1_t2):
    data, fit = dgp1_t2
    g = fit_gamma(data, fit)
    for rule in ("variance", "constant", "none"):
        est = estimate_bounds(data, fit, gamma=g, proj=ProjectionConfig(rule), check=False)
        assert est.lower <= est.upper
    with pytest.raises(ValidationError):
        ProjectionConfig("other")


def test_im_limits():
    assert im_critical_value(0.0) == pytest.approx(1.959964, abs=1e-5)
    assert im_critical_value(10.0) == pytest.approx(1.644854, abs=1e-4)
    assert im_critical_value(1e6) == pytest.approx(norm.ppf(0.95), abs=1e-9)
    vals = [im_critical_value(w) for w in np.linspace(0, 5, 30)]
    assert np.all(np.diff(vals) <= 1e-12)


def _est(lower, upper, sd, n=400):
    psi = np.random.default_rng(0).normal(size=(n, 2))
    psi = (psi - psi.mean(0)) / psi.std(0) * sd
    return BoundsEstimate(lower, upper, psi, psi.T @ psi / n, n)


def test_ci1_point_identified_is_wald():
    est = _est(0.3, 0.3, 1.0)
    ci = ci1(est)
    half = norm.ppf(0.975) / np.sqrt(400)
    assert (ci.lo, ci.hi) == pytest.approx((0.3 - half, 0.3 + half), rel=1e-6)


def test_ci1_hull_contains_zero():
    class Fit:
        beta_hat = np.array([0.5])
        se = np.array([1.0])

    ci = ci1(_est(0.2, 0.3, 1.0), Fit())
    assert ci.contains(0.0)
    Fit.se = np.array([0.01])
    assert not ci1(_est(0.2, 0.3, 1.0), Fit()).contains(0.0)


def test_confidence_interval_validation():
    with pytest.raises(ValidationError):
        ConfidenceInterval(1.0, 0.0, 0.95, "x")
    with pytest.raises(ValidationError):
        ConfidenceInterval(0.0, 1.0, 1.5, "x")


def test_unbalanced_bounds():
    data = generate(DgpConfig(1, n=1500, seed=3, reps=1, T_values=(2, 3)))
    fit = fit_cmle(data)
    est = estimate_bounds(data, fit, check=False)
    assert est.lower <= est.upper
    assert abs(0.5 * (est.lower + est.upper) - 0.25) <= 3 * est.se.max() + 0.02


def test_oracle_bounds_converge_dgp1():
    cfg = DgpConfig(1, 3, 50_000, 1.0, seed=2, reps=1)
    data = generate(cfg)
    fit = fit_cmle(data).with_beta([1.0])
    est = estimate_bounds(data, fit, gamma=oracle_gamma(cfg, data), check=False)
    assert est.lower == pytest.approx(0.25, abs=0.01)
    assert est.upper == pytest.approx(0.25, abs=0.01)
