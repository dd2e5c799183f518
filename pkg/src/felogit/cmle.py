"""Conditional maximum likelihood for the fixed-effects panel logit.

Conditioning on ``S = sum_t Y_t`` removes the individual effect. The
conditional probability of an outcome path with ``S = s`` is
``exp(sum_t y_t x_t'b) / C_s(x, b)`` where ``C_s`` is the elementary symmetric
polynomial of degree s in ``exp(x_t'b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DivergenceError, IdentificationError, NonConvergenceError, NumericError
from .panel import PanelDataset, PanelUnit, check_rank_condition


def esp(w: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials of the last axis of ``w``.

    Parameters
    ----------
    w : ndarray, shape (..., T)
        Nonnegative weights.

    Returns
    -------
    ndarray, shape (..., T + 1)
        ``e_0 = 1, e_1 = sum w, ..., e_T = prod w``, by the recursion
        ``e_k <- e_k + w_t e_{k-1}`` which only adds nonnegative terms.
    """
    w = np.asarray(w, dtype=float)
    T = w.shape[-1]
    e = np.zeros(w.shape[:-1] + (T + 1,))
    e[..., 0] = 1.0
    for t in range(T):
        e[..., 1 : t + 2] = e[..., 1 : t + 2] + w[..., t, None] * e[..., : t + 1]
    return e


def esp_leave_one_out(w: np.ndarray) -> np.ndarray:
    """``e_k`` of ``w`` with entry t removed, shape (..., T, T)."""
    T = w.shape[-1]
    out = np.empty(w.shape[:-1] + (T, T))
    for t in range(T):
        out[..., t, :] = esp(np.delete(w, t, axis=-1))
    return out


def _scaled_weights(xb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = xb.max(axis=-1)
    return np.exp(xb - shift[..., None]), shift


def symmetric_sums(x, beta) -> np.ndarray:
    """``C_k(x, b)`` for k = 0..T.

    ``C_k`` sums ``exp(sum_{t in A} x_t'b)`` over subsets A of size k. The
    largest index ``x_t'b`` is factored out before the recursion so that
    large indices do not overflow intermediate products.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    xb = x @ np.atleast_1d(np.asarray(beta, dtype=float))
    if not np.all(np.isfinite(xb)):
        raise NumericError("non-finite index x'b")
    w, shift = _scaled_weights(xb)
    e = esp(w)
    with np.errstate(over="raise"):
        try:
            out = e * np.exp(shift * np.arange(e.shape[-1]))
        except FloatingPointError as exc:
            raise NumericError("symmetric sums overflow; use log_symmetric_sums") from exc
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite symmetric sums")
    return out


def log_symmetric_sums(x, beta) -> np.ndarray:
    """``log C_k(x, b)`` for k = 0..T (``-inf`` where ``C_k`` underflows)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    xb = x @ np.atleast_1d(np.asarray(beta, dtype=float))
    w, shift = _scaled_weights(xb)
    with np.errstate(divide="ignore"):
        return np.log(esp(w)) + shift[..., None] * np.arange(xb.shape[-1] + 1)


def _stratum_terms(x: np.ndarray, y: np.ndarray, beta: np.ndarray, derivs: bool = True):
    """Per-unit log-likelihood, score and Hessian for a balanced stratum.

    With ``pi_t = P(d_t = 1 | S = s)`` and ``pi_tu = P(d_t = d_u = 1 | S = s)``
    under the conditional law over paths, the score is
    ``sum_t (y_t - pi_t) x_t`` and the Hessian is minus the conditional
    covariance of ``sum_t d_t x_t``.
    """
    n, T, p = x.shape
    s = y.sum(axis=1).astype(int)
    xb = x @ beta
    w, shift = _scaled_weights(xb)
    e = esp(w)
    es = np.take_along_axis(e, s[:, None], axis=1)[:, 0]
    ll = (y * xb).sum(axis=1) - np.log(es) - s * shift
    if not derivs:
        return ll, None, None
    loo = esp_leave_one_out(w)  # (n, T, T)
    sm1 = np.clip(s - 1, 0, T - 1)
    e_sm1 = np.take_along_axis(loo, sm1[:, None, None].repeat(T, 1), axis=2)[:, :, 0]
    pi = np.where(s[:, None] >= 1, w * e_sm1 / es[:, None], 0.0)
    grad = np.einsum("nt,ntp->np", y - pi, x)
    pij = np.zeros((n, T, T))
    if T >= 2:
        for a, b in combinations(range(T), 2):
            e2 = esp(np.delete(w, [a, b], axis=-1))
            sm2 = np.clip(s - 2, 0, T - 2)
            val = np.take_along_axis(e2, sm2[:, None], axis=1)[:, 0]
            v = np.where(s >= 2, w[:, a] * w[:, b] * val / es, 0.0)
            pij[:, a, b] = pij[:, b, a] = v
    idx = np.arange(T)
    pij[:, idx, idx] = pi
    cov = pij - pi[:, :, None] * pi[:, None, :]
    hess = -np.einsum("ntp,ntu,nuq->npq", x, cov, x)
    return ll, grad, hess


def cond_loglik(unit: PanelUnit, beta, derivs: bool = False):
    """Conditional log-likelihood of one unit.

    Returns the value, or ``(value, gradient, hessian)`` when ``derivs``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    x = np.asarray(unit.x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    ll, g, h = _stratum_terms(x[None], np.asarray(unit.y, float)[None], beta, derivs)
    if not derivs:
        return float(ll[0])
    return float(ll[0]), g[0], h[0]


def panel_loglik(data: PanelDataset, beta, derivs: bool = True):
    """Per-unit conditional log-likelihood terms in data order.

    Returns ``(ll, grad, hess)`` with shapes ``(n,)``, ``(n, p)``, ``(n, p, p)``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    n, p = data.n, data.p
    ll = np.zeros(n)
    grad = np.zeros((n, p)) if derivs else None
    hess = np.zeros((n, p, p)) if derivs else None
    for T, idx in data.strata():
        l_, g_, h_ = _stratum_terms(data.x[idx, :T], data.y[idx, :T], beta, derivs)
        ll[idx] = l_
        if derivs:
            grad[idx] = g_
            hess[idx] = h_
    return ll, grad, hess


@dataclass(frozen=True)
class CmleFit:
    """Result of :func:`fit_cmle`.

    ``info`` estimates the per-unit Fisher information, ``phi`` holds the
    influence vectors ``info^{-1} score_i`` and ``tau`` the asymptotic
    standard deviations, so standard errors are ``tau / sqrt(n)``.
    """

    beta_hat: np.ndarray
    info: np.ndarray
    info_inv: np.ndarray
    phi: np.ndarray
    tau: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    loglik: float
    n: int

    @property
    def se(self) -> np.ndarray:
        return self.tau / np.sqrt(self.n)

    @property
    def cov(self) -> np.ndarray:
        return self.info_inv / self.n

    def with_beta(self, beta) -> "CmleFit":
        """Copy with ``beta_hat`` replaced (other fields kept)."""
        return CmleFit(np.atleast_1d(np.asarray(beta, float)).copy(), self.info, self.info_inv,
                       self.phi, self.tau, self.converged, self.iterations,
                       self.gradient_norm, self.loglik, self.n)


def fit_cmle(
    data: PanelDataset,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_norm: float = 1e3,
    check_rank: bool = True,
) -> CmleFit:
    """Maximise the conditional log-likelihood by damped Newton steps.

    Starts at zero, halves the step until the objective does not decrease, and
    stops when the sup-norm of the average score falls below ``tol``.

    Raises
    ------
    IdentificationError
        The sample rank condition fails.
    NonConvergenceError
        ``max_iter`` exceeded, or the likelihood is flat (no unit has
        ``0 < S < T``).
    DivergenceError
        ``||b||`` exceeds ``max_norm``.
    """
    if check_rank and not check_rank_condition(data).nonsingular:
        raise IdentificationError("rank condition fails: no within-unit covariate variation")
    movers = (data.s > 0) & (data.s < data.T)
    if not movers.any():
        raise NonConvergenceError("flat conditional likelihood: every unit has S in {0, T}")
    sub = data.subset(movers)
    n = data.n
    beta = np.zeros(data.p)

    def objective(b):
        ll, g, h = panel_loglik(sub, b, derivs=True)
        return ll.sum(), g.sum(axis=0), h.sum(axis=0)

    f, g, H = objective(beta)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) / n < tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError("singular Hessian", beta) from exc
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            fc = panel_loglik(sub, cand, derivs=False)[0].sum()
            if np.isfinite(fc) and fc >= f - 1e-12 * abs(f):
                break
            t *= 0.5
        else:
            raise NonConvergenceError("line search failed", beta)
        beta = cand
        if np.linalg.norm(beta) > max_norm:
            raise DivergenceError(f"||beta|| exceeded {max_norm:g}", beta)
        f, g, H = objective(beta)
    else:
        if np.max(np.abs(g)) / n < tol:
            converged = True
        else:
            raise NonConvergenceError(f"no convergence after {max_iter} iterations", beta)

    _, grad_i, hess_i = panel_loglik(data, beta, derivs=True)
    info = -hess_i.sum(axis=0) / n
    info = 0.5 * (info + info.T)
    try:
        info_inv = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError("singular information matrix", beta) from exc
    phi = grad_i @ info_inv
    tau = np.sqrt(np.diag(info_inv))
    return CmleFit(
        beta_hat=beta,
        info=info,
        info_inv=info_inv,
        phi=phi,
        tau=tau,
        converged=converged,
        iterations=it,
        gradient_norm=float(np.max(np.abs(g)) / n),
        loglik=float(f),
        n=n,
    )
