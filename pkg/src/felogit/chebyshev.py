"""Chebyshev-approximation estimator of average effects and its intervals.

Replacing the unidentified ``u^{T+1}`` by its best degree-T approximation
``P*_T(u) = sum_t b_t u^t`` turns the effect into a point-identified
quantity ``E[kappa * p(X, S, b)]`` whose distance to the true effect is at
most ``b_bar = |kappa| * E[binom(T, S) |lambda_{T+1}| / E_S] / (2 * 4^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .bounds import ConfidenceInterval
from .cmle import CmleFit
from .errors import EstimationError, ValidationError
from .moments import ChebyshevApprox, chebyshev_pstar
from .panel import PanelDataset
from .targets import (
    EffectTarget,
    esp_batch,
    gamma_matrix,
    lambda_batch,
    reference_period,
    reference_points,
)


@lru_cache(maxsize=None)
def _cheb(T: int) -> ChebyshevApprox:
    return chebyshev_pstar(T)


@dataclass
class SimpleEstimate:
    """Chebyshev-approximation estimate.

    ``psi`` are the estimated influence values, ``sigma_hat`` their root mean
    square, ``rbar_hat`` the bias-bound factor and ``bbar_hat`` the bias
    bound (``|b_k| * rbar_hat`` for the marginal effect).
    """

    delta_hat: float
    sigma_hat: float
    rbar_hat: float
    bbar_hat: float
    psi: np.ndarray
    n: int
    kind: str = "ame"


def _p_core(x, s, beta, kind, k, ref, cheb: ChebyshevApprox, derivs: bool, x0=None):
    """``sum_{t<=s} binom(T-t, s-t) (lambda_t + b_t lambda_{T+1}) / E_s`` per unit.

    Also returns the per-unit bias-bound term
    ``binom(T, s) |lambda_{T+1}| / E_s / (2 * 4^T)`` and, when ``derivs``, the
    beta-derivative of the main term.
    """
    n, T, p = x.shape
    xs = reference_points(x, kind, k, ref, x0)
    lam, dlam = lambda_batch(x, xs, beta, kind, ref, derivs)
    E, dE = esp_batch(x, xs, beta, derivs)
    G = gamma_matrix(T)
    coef = lam[:, : T + 1] + cheb.b[None, :] * lam[:, T + 1 : T + 2]
    rows = np.arange(n)
    A_s = (coef @ G)[rows, s]
    E_s = E[rows, s]
    val = A_s / E_s
    binom_s = G[0, s]
    rterm = binom_s * np.abs(lam[:, T + 1]) / E_s * cheb.sup_err
    if not derivs:
        return val, None, rterm
    dcoef = dlam[:, : T + 1, :] + cheb.b[None, :, None] * dlam[:, T + 1 : T + 2, :]
    dA_s = np.einsum("ntp,nt->np", dcoef, G[:, s].T)
    dE_s = dE[rows, s, :]
    dval = (dA_s - val[:, None] * dE_s) / E_s[:, None]
    return val, dval, rterm


def _unit_terms(data: PanelDataset, beta: np.ndarray, target: EffectTarget, derivs: bool = True):
    """Per-unit value ``v``, its beta-derivative, group weight and bias term.

    The estimate is ``sum w v / sum w`` and the bias bound
    ``sum w rterm / sum w`` (times ``|b_k|`` for the marginal effect).
    """
    n, p = data.n, data.p
    k = target.effect_index(data)
    ref = reference_period(data.T)
    kind = target.kind
    v = np.zeros(n)
    dv = np.zeros((n, p))
    rterm = np.zeros(n)
    if kind in ("att", "atu", "ate"):
        treat = data.x[:, ref, k]
        if not np.all((treat == 0) | (treat == 1)):
            raise ValidationError(f"covariate {k} is not binary at the reference period")
        w = {"att": treat, "atu": 1.0 - treat, "ate": np.ones(n)}[kind]
    else:
        w = np.ones(n)
    if not w.sum() > 0:
        raise ValidationError(f"no units in the {kind} group")
    y_ref = data.y[:, ref].astype(float)
    for T, idx in data.strata():
        x = data.x[idx, :T]
        s = data.s[idx].astype(int)
        cheb = _cheb(T)
        if kind == "ame":
            val, dval, rt = _p_core(x, s, beta, "ame", k, ref, cheb, derivs)
            v[idx] = beta[k] * val
            if derivs:
                dv[idx] = beta[k] * dval
                dv[idx, k] += val
            rterm[idx] = rt
        elif kind == "asf":
            val, dval, rt = _p_core(x, s, beta, "asf", k, ref, cheb, derivs, target.x0)
            v[idx] = val
            if derivs:
                dv[idx] = dval
            rterm[idx] = rt
        else:
            d = data.x[idx, ref, k]
            v1, dv1, r1 = _p_core(x, s, beta, "att", k, ref, cheb, derivs)
            v0, dv0, r0 = _p_core(x, s, beta, "atu", k, ref, cheb, derivs)
            yr = y_ref[idx]
            v[idx] = d * (yr - v1) + (1 - d) * (v0 - yr)
            if derivs:
                dv[idx] = -d[:, None] * dv1 + (1 - d)[:, None] * dv0
            rterm[idx] = d * r1 + (1 - d) * r0
    return v, dv, w, rterm


def p_term(x, s: int, beta, cheb: ChebyshevApprox | None = None, target: EffectTarget | str = "ame",
           y_ref: float | None = None, ref: int | None = None) -> float:
    """The Chebyshev integrand for one unit (``x`` of shape (T, p)).

    For the marginal effect this is ``p(x, s, b)`` (without the ``b_k``
    factor). For ``"ate"`` it is ``p^ATE``, which needs the reference-period
    outcome ``y_ref``; the treatment is ``x[ref, k]``.
    """
    target = EffectTarget(target) if isinstance(target, str) else target
    x = np.asarray(x, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    T = x.shape[0]
    cheb = _cheb(T) if cheb is None else cheb
    if cheb.T != T:
        raise ValidationError(f"Chebyshev approximation is for T = {cheb.T}, unit has T = {T}")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    ref = T - 1 if ref is None else ref
    k = 0 if target.k is None else target.k
    s_arr = np.array([int(s)])
    if target.kind == "ame":
        return float(_p_core(x[None], s_arr, beta, "ame", k, ref, cheb, False)[0][0])
    if target.kind == "asf":
        return float(_p_core(x[None], s_arr, beta, "asf", k, ref, cheb, False, target.x0)[0][0])
    if y_ref is None:
        raise ValidationError("treatment-effect integrands need the reference-period outcome")
    d = x[ref, k]
    v1 = _p_core(x[None], s_arr, beta, "att", k, ref, cheb, False)[0][0]
    v0 = _p_core(x[None], s_arr, beta, "atu", k, ref, cheb, False)[0][0]
    val = {"ate": d * (y_ref - v1) + (1 - d) * (v0 - y_ref),
           "att": d * (y_ref - v1), "atu": (1 - d) * (v0 - y_ref)}[target.kind]
    return float(val)


def estimate_simple(data: PanelDataset, fit: CmleFit, target: EffectTarget | str = "ame") -> SimpleEstimate:
    """Plug-in Chebyshev estimate with influence values and bias bound."""
    target = EffectTarget(target) if isinstance(target, str) else target
    if not fit.converged:
        raise EstimationError("CMLE did not converge")
    if fit.phi.shape[0] != data.n:
        raise ValidationError("fit and data have different numbers of units")
    beta = fit.beta_hat
    v, dv, w, rterm = _unit_terms(data, beta, target)
    wbar = w.mean()
    delta = float(np.sum(w * v) / np.sum(w))
    grad = (w[:, None] * dv).sum(axis=0) / w.sum()
    psi = w * (v - delta) / wbar + fit.phi @ grad
    sigma = float(np.sqrt(np.mean(psi**2)))
    rbar = float(np.sum(w * rterm) / np.sum(w))
    k = target.effect_index(data)
    bbar = abs(float(beta[k])) * rbar if target.kind == "ame" else rbar
    return SimpleEstimate(delta, sigma, rbar, bbar, psi, data.n, target.kind)


def folded_normal_quantile(b: float, alpha: float = 0.05) -> float:
    """The ``1 - alpha`` quantile of ``|N(b, 1)|``."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    b = abs(float(b))

    def f(c):
        return norm.cdf(c - b) - norm.cdf(-c - b) - (1 - alpha)

    lo, hi = max(0.0, b - 1.0), b + 5.0
    while f(lo) > 0:
        lo = max(0.0, lo - 2.0 * (hi - lo))
        if lo == 0.0:
            break
    while f(hi) < 0:
        hi = b + 2.0 * (hi - b)
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-14))


def _interval(est: SimpleEstimate, bbar: float, alpha: float, method: str, level: float) -> ConfidenceInterval:
    if not est.sigma_hat > 0:
        raise EstimationError("degenerate variance estimate")
    rn = np.sqrt(est.n)
    half = folded_normal_quantile(rn * bbar / est.sigma_hat, alpha) * est.sigma_hat / rn
    return ConfidenceInterval(est.delta_hat - half, est.delta_hat + half, level, method)


def ci2(est: SimpleEstimate, n: int | None = None, alpha: float = 0.05) -> ConfidenceInterval:
    """``delta_hat +- q_alpha(sqrt(n) b_bar / sigma) sigma / sqrt(n)``."""
    if n is not None and n != est.n:
        est = SimpleEstimate(est.delta_hat, est.sigma_hat, est.rbar_hat, est.bbar_hat, est.psi, n, est.kind)
    return _interval(est, est.bbar_hat, alpha, "CI2", 1 - alpha)


def ci3(est: SimpleEstimate, fit: CmleFit, gamma: float = 0.01, delta: float = 0.04, k: int = 0) -> ConfidenceInterval:
    """Interval that also accounts for the estimation error in ``|b_k|``.

    The bias bound is inflated to ``(|b_k| + z_{1-gamma} tau_k / sqrt(n)) R``
    and the folded-normal quantile is taken at level ``delta``. Uniform
    coverage needs the standard deviation of the estimator bounded away from
    zero over the model class; that condition is not checkable from data and
    is not checked here.
    """
    if est.kind != "ame":
        raise ValidationError("CI3 is only defined for the average marginal effect")
    if not (gamma > 0 and delta > 0 and gamma + delta < 1):
        raise ValidationError("gamma and delta must be positive with gamma + delta < 1")
    bk = abs(float(fit.beta_hat[k])) + norm.ppf(1 - gamma) * fit.tau[k] / np.sqrt(est.n)
    return _interval(est, bk * est.rbar_hat, delta, "CI3", 1 - gamma - delta)
