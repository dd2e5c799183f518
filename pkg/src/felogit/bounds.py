"""Sharp-bound estimation of average effects with influence-function inference.

For each unit, the identified part of the effect is ``r(X, S, b)`` and the
rest is ``kappa * c_0(X) * lambda_{T+1}(X, b) * m_{T+1}``, where ``m_{T+1}`` is
only known to lie between the extremal moments of the first T+1 moments
``m(X) = c(X) / c_0(X)``. ``kappa`` is ``b_k`` for the marginal effect and 1
for the other targets. Plugging in the CMLE and local polynomial estimates of
``gamma_j(x) = P(S = j | X = x)`` and picking the extremal moment by the sign
of ``kappa * lambda_{T+1}`` gives the lower and upper bound estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .cmle import CmleFit
from .errors import EstimationError, ValidationError
from .localpoly import fit_gamma, indicator_matrix
from .moments import (
    _all_dets,
    complete_from_prefix,
    extremal_gradient,
    interior_extremal,
    project_moments,
)
from .panel import PanelDataset
from .targets import (
    EffectTarget,
    esp_batch,
    gamma_matrix,
    lambda_batch,
    reference_period,
    reference_points,
)

FD_STEP = 1e-6
DERIV_CHECK_TOL = 1e-4


@dataclass(frozen=True)
class ProjectionConfig:
    """How estimated moment vectors are pushed into the moment space.

    ``rule="variance"`` uses delta-method standard errors of each Hankel
    determinant times ``sqrt(2 ln ln n)`` as thresholds; ``"constant"`` uses a
    single threshold ``c_n`` on the product of lower and upper determinants;
    ``"none"`` only repairs vectors outside the space. With known ``gamma``
    there are no sampling errors and ``"variance"`` falls back to ``"none"``.
    """

    rule: str = "variance"
    c_n: float | None = None

    def __post_init__(self):
        if self.rule not in ("variance", "constant", "none"):
            raise ValidationError(f"unknown projection rule {self.rule!r}")
        if self.c_n is not None and not self.c_n > 0:
            raise ValidationError("c_n must be positive")


@dataclass(frozen=True)
class EffectWeights:
    """Per-unit ingredients of the bounds (arrays over units of one stratum)."""

    lambdas: np.ndarray
    c: np.ndarray
    m: np.ndarray
    r: np.ndarray


@dataclass
class BoundsEstimate:
    """Estimated bounds with their influence functions.

    ``psi`` has one row per unit and columns (lower, upper); ``sigma`` is
    ``psi' psi / n``.
    """

    lower: float
    upper: float
    psi: np.ndarray
    sigma: np.ndarray
    n: int
    kind: str = "ame"
    I_hat: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma) / self.n)


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    method: str

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValidationError(f"interval endpoints out of order: {self.lo} > {self.hi}")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("level must lie in (0, 1)")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


# ---------------------------------------------------------------------------
# Single-unit building blocks


def _as_unit_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def lambda_coeffs(x, beta, target: EffectTarget | str = "ame", ref: int | None = None) -> np.ndarray:
    """``lambda_0..lambda_{T+1}`` for one unit (``x`` of shape (T, p)).

    ``ref`` defaults to the last period.
    """
    target = EffectTarget(target) if isinstance(target, str) else target
    x = _as_unit_x(x)
    T = x.shape[0]
    ref = T - 1 if ref is None else ref
    k = 0 if target.k is None else target.k
    kind = "att" if target.kind == "ate" else target.kind
    xs = reference_points(x[None], kind, k, ref, target.x0)
    lam, _ = lambda_batch(x[None], xs, np.atleast_1d(np.asarray(beta, float)), kind, ref)
    return lam[0]


def c_from_gamma(gamma_x, x, beta, target: EffectTarget | str = "ame", ref: int | None = None) -> np.ndarray:
    """``c_t = sum_{j >= t} binom(T - t, j - t) gamma_j exp(j x*'b) / C_j(x, b)``."""
    target = EffectTarget(target) if isinstance(target, str) else target
    x = _as_unit_x(x)
    T = x.shape[0]
    ref = T - 1 if ref is None else ref
    k = 0 if target.k is None else target.k
    kind = "att" if target.kind == "ate" else target.kind
    xs = reference_points(x[None], kind, k, ref, target.x0)
    E, _ = esp_batch(x[None], xs, np.atleast_1d(np.asarray(beta, float)))
    return (np.asarray(gamma_x, float) / E[0]) @ gamma_matrix(T).T


# ---------------------------------------------------------------------------
# Stratum evaluator


@dataclass
class _Structure:
    """Discrete choices frozen when differentiating: prefix length, boundary
    side and the bound-selection sign."""

    I_hat: np.ndarray
    lower_side: np.ndarray
    positive: np.ndarray


def _det_sigmas(gam: np.ndarray, E: np.ndarray, G: np.ndarray, wcross: np.ndarray):
    """Delta-method standard errors of the Hankel determinants of m(gamma)."""
    n, J = gam.shape
    T = J - 1

    def dets(g):
        c = (g / E) @ G.T
        lo, up, _, _ = _all_dets(c / c[:, :1])
        return np.concatenate([lo, up], axis=1)

    grad = np.empty((n, 2 * T, J))
    for j in range(J):
        e = np.zeros(J)
        e[j] = FD_STEP
        grad[:, :, j] = (dets(gam + e) - dets(gam - e)) / (2 * FD_STEP)
    cov = wcross * (gam[:, :, None] * np.eye(J) - gam[:, :, None] * gam[:, None, :])
    var = np.einsum("nai,nij,naj->na", grad, cov, grad)
    sd = np.sqrt(np.maximum(var, 0.0))
    return sd[:, :T], sd[:, T:]


def _q_pair(mt: np.ndarray, st: _Structure):
    """Extremal next moments (lower, upper) under a fixed structure."""
    T = mt.shape[1] - 1
    q_lo = np.empty(mt.shape[0])
    q_up = np.empty(mt.shape[0])
    full = st.I_hat >= T
    if np.any(full):
        q_lo[full], q_up[full] = interior_extremal(mt[full])
    if np.any(~full):
        _, qn = complete_from_prefix(mt[~full], st.I_hat[~full], st.lower_side[~full])
        q_lo[~full] = q_up[~full] = qn
    return q_lo, q_up


def _q_pair_gradient(mt: np.ndarray, q_lo, q_up, st: _Structure):
    """``dq/dm`` for both extremal moments, shape (n, T + 1) each."""
    n, T = mt.shape[0], mt.shape[1] - 1
    g_lo = np.zeros((n, T + 1))
    g_up = np.zeros((n, T + 1))
    full = st.I_hat >= T
    if np.any(full):
        g_lo[full] = extremal_gradient(mt[full], q_lo[full], "lower")
        g_up[full] = extremal_gradient(mt[full], q_up[full], "upper")
    rows = ~full
    if np.any(rows):
        sub = mt[rows]
        for t in range(1, T + 1):
            e = np.zeros(T + 1)
            e[t] = FD_STEP
            _, qp = complete_from_prefix(sub + e, st.I_hat[rows], st.lower_side[rows])
            _, qm = complete_from_prefix(sub - e, st.I_hat[rows], st.lower_side[rows])
            g_lo[rows, t] = g_up[rows, t] = (qp - qm) / (2 * FD_STEP)
    g_lo[:, 0] = g_up[:, 0] = 0.0
    return g_lo, g_up


def _evaluate(x, s, gam, beta, target: EffectTarget, k: int, ref: int, *,
              n_thr: int, proj: ProjectionConfig, wcross=None,
              structure: _Structure | None = None, derivs: bool = False):
    """Bounds integrands (and derivatives) for one stratum.

    Returns a dict with ``h`` (n, 2), ``weights``, ``structure`` and, when
    ``derivs``, ``d_beta`` (n, 2, p) and ``d_gamma`` (n, 2, T + 1). With
    ``s=None`` the identified part is averaged over S given X, which gives the
    population bound integrands.
    """
    n, T, p = x.shape
    kind = target.kind
    xs = reference_points(x, kind, k, ref, target.x0)
    lam, dlam = lambda_batch(x, xs, beta, kind, ref, derivs)
    E, dE = esp_batch(x, xs, beta, derivs)
    G = gamma_matrix(T)
    v = gam / E
    c = v @ G.T
    c0 = c[:, 0]
    if not np.all(c0 > 0):
        raise EstimationError(f"c_0 <= 0 at units {np.flatnonzero(~(c0 > 0)).tolist()}")
    mt = c / c0[:, None]
    kappa = beta[k] if kind == "ame" else 1.0
    dkappa = np.eye(p)[k] if kind == "ame" else np.zeros(p)
    A = lam[:, : T + 1] @ G  # A[:, j] = sum_t binom(T - t, j - t) lambda_t
    rows = np.arange(n)
    if s is None:
        # population version: r averaged over S given X
        if derivs:
            raise ValueError("derivatives need observed S")
        r = kappa * np.sum(gam * A / E, axis=1)
    else:
        A_s, E_s = A[rows, s], E[rows, s]
        r = kappa * A_s / E_s
    lamT = lam[:, T + 1]

    if structure is None:
        rule = proj.rule
        sl = su = None
        if rule == "variance":
            if wcross is None:
                rule = "none"
            else:
                sl, su = _det_sigmas(gam, E, G, wcross)
        pr = project_moments(mt, n_thr, sl, su, c_n=proj.c_n, rule=rule)
        structure = _Structure(np.atleast_1d(pr.I_hat), np.atleast_1d(pr.lower_side),
                               kappa * lamT >= 0)
    q_lo, q_up = _q_pair(mt, structure)
    pos = structure.positive
    q_sel = np.stack([np.where(pos, q_lo, q_up), np.where(pos, q_up, q_lo)], axis=1)
    active = lamT != 0.0
    scale = np.where(active, kappa * c0 * lamT, 0.0)
    h = r[:, None] + scale[:, None] * np.where(active[:, None], q_sel, 0.0)
    out = {"h": h, "structure": structure, "weights": EffectWeights(lam, c, mt, r)}
    if not derivs:
        return out

    # beta- and gamma-derivatives of c and m
    dv_b = -(gam / E**2)[:, :, None] * dE  # (n, J, p)
    dc_b = np.einsum("tj,njp->ntp", G, dv_b)
    dc_g = G[None, :, :] / E[:, None, :]  # dc_t / dgamma_j
    dm_b = (dc_b - mt[:, :, None] * dc_b[:, :1, :]) / c0[:, None, None]
    dm_g = (dc_g - mt[:, :, None] * dc_g[:, :1, :]) / c0[:, None, None]
    g_lo, g_up = _q_pair_gradient(mt, q_lo, q_up, structure)
    g_sel = np.stack([np.where(pos[:, None], g_lo, g_up), np.where(pos[:, None], g_up, g_lo)], axis=1)
    dq_b = np.einsum("nbt,ntp->nbp", g_sel, dm_b)
    dq_g = np.einsum("nbt,ntj->nbj", g_sel, dm_g)

    dA_s = np.einsum("ntp,nt->np", dlam[:, : T + 1, :], G[:, s].T)
    dE_s = dE[rows, s, :]
    dr = dkappa[None, :] * (A_s / E_s)[:, None] + kappa * (dA_s * E_s[:, None] - A_s[:, None] * dE_s) / E_s[:, None] ** 2
    dlamT = dlam[:, T + 1, :]
    d_scale = (dkappa[None, :] * (c0 * lamT)[:, None] + kappa * dc_b[:, 0, :] * lamT[:, None]
               + kappa * c0[:, None] * dlamT)
    d_beta = dr[:, None, :] + d_scale[:, None, :] * q_sel[:, :, None] + scale[:, None, None] * dq_b
    d_gamma = (kappa * lamT)[:, None, None] * (dc_g[:, None, 0, :] * q_sel[:, :, None]
                                               + c0[:, None, None] * dq_g)
    # lambda_{T+1} = 0: q may be undefined, only its beta-derivative survives
    d_beta = np.where(active[:, None, None], d_beta,
                      dr[:, None, :] + d_scale[:, None, :] * np.nan_to_num(q_sel)[:, :, None])
    d_gamma = np.where(active[:, None, None], d_gamma, 0.0)
    out.update(d_beta=d_beta, d_gamma=d_gamma)
    return out


def _fd_check(x, s, gam, beta, target, k, ref, ev, n_thr, proj, max_units: int = 25):
    """Largest gap between analytic and central-difference derivatives."""
    idx = np.arange(min(max_units, x.shape[0]))
    st = _Structure(ev["structure"].I_hat[idx], ev["structure"].lower_side[idx],
                    ev["structure"].positive[idx])
    args = dict(n_thr=n_thr, proj=proj, structure=st)
    xs, ss, gs = x[idx], s[idx], gam[idx]
    worst = 0.0
    for j in range(beta.size):
        e = np.zeros(beta.size)
        e[j] = FD_STEP
        hp = _evaluate(xs, ss, gs, beta + e, target, k, ref, **args)["h"]
        hm = _evaluate(xs, ss, gs, beta - e, target, k, ref, **args)["h"]
        worst = max(worst, float(np.max(np.abs((hp - hm) / (2 * FD_STEP) - ev["d_beta"][idx, :, j]))))
    for j in range(gam.shape[1]):
        e = np.zeros(gam.shape[1])
        e[j] = FD_STEP
        hp = _evaluate(xs, ss, gs + e, beta, target, k, ref, **args)["h"]
        hm = _evaluate(xs, ss, gs - e, beta, target, k, ref, **args)["h"]
        worst = max(worst, float(np.max(np.abs((hp - hm) / (2 * FD_STEP) - ev["d_gamma"][idx, :, j]))))
    return worst


# ---------------------------------------------------------------------------
# Estimation


def _gamma_for(gamma, T: int, sub: PanelDataset, fit: CmleFit, ell: int, bandwidth, R_n):
    if isinstance(gamma, dict):
        g = gamma.get(T)
        if g is None:
            raise ValidationError(f"no gamma estimate supplied for T = {T}")
        return g
    if gamma is not None:
        return gamma
    return fit_gamma(sub, fit, ell=ell, h=bandwidth, R_n=R_n)


@dataclass
class _Pieces:
    """Per-unit integrands of a (possibly stratified) sample."""

    h: np.ndarray
    d_beta: np.ndarray
    gamma_term: np.ndarray
    I_hat: np.ndarray
    T: np.ndarray
    lam_last: np.ndarray
    c0: np.ndarray
    kappa: float
    fd_gap: float


def bounds_pieces(data: PanelDataset, beta, target: EffectTarget, gamma=None, fit: CmleFit | None = None,
                  proj: ProjectionConfig | None = None, ell: int = 1, bandwidth=None,
                  R_n: float | None = None, ref: int | None = None, check: bool = True) -> _Pieces:
    """Per-unit bound integrands, their beta-derivatives and gamma corrections.

    Strata of equal T are handled separately with the common reference period
    ``ref`` (the shortest panel's last period by default).
    """
    proj = proj or ProjectionConfig()
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    k = target.effect_index(data)
    if not 0 <= k < data.p:
        raise ValidationError(f"effect index {k} out of range for p = {data.p}")
    if target.kind == "asf" and len(target.x0) != data.p:
        raise ValidationError(f"x0 has {len(target.x0)} entries, expected p = {data.p}")
    ref = reference_period(data.T) if ref is None else ref
    n = data.n
    h = np.zeros((n, 2))
    d_beta = np.zeros((n, 2, data.p))
    gterm = np.zeros((n, 2))
    I_hat = np.zeros(n, dtype=int)
    lam_last = np.zeros(n)
    c0 = np.zeros(n)
    gap = 0.0
    for T, idx in data.strata():
        sub = data.subset(idx)
        g = _gamma_for(gamma, T, sub, fit, ell, bandwidth, R_n)
        gam, wcross = g.at_sample(want_weights=proj.rule == "variance")
        gam = np.asarray(gam, dtype=float)
        x = data.x[idx, :T]
        s = data.s[idx].astype(int)
        ev = _evaluate(x, s, gam, beta, target, k, ref, n_thr=n, proj=proj, wcross=wcross, derivs=True)
        if check:
            gap = max(gap, _fd_check(x, s, gam, beta, target, k, ref, ev, n, proj))
        Z = indicator_matrix(s, T)
        h[idx] = ev["h"]
        d_beta[idx] = ev["d_beta"]
        gterm[idx] = np.einsum("nbj,nj->nb", ev["d_gamma"], Z - gam)
        I_hat[idx] = ev["structure"].I_hat
        lam_last[idx] = ev["weights"].lambdas[:, T + 1]
        c0[idx] = ev["weights"].c[:, 0]
    if check and gap > DERIV_CHECK_TOL:
        warnings.warn(f"analytic and finite-difference derivatives differ by {gap:.2e}", RuntimeWarning)
    kappa = float(beta[k]) if target.kind == "ame" else 1.0
    return _Pieces(h, d_beta, gterm, I_hat, np.asarray(data.T), lam_last, c0, kappa, gap)


def _finish(lower, upper, psi, n, kind, pieces: _Pieces | None, extra=None) -> BoundsEstimate:
    sigma = psi.T @ psi / n
    sigma = 0.5 * (sigma + sigma.T)
    diag = {}
    if pieces is not None:
        vals, counts = np.unique(pieces.I_hat, return_counts=True)
        diag["I_hat_counts"] = {int(v): int(c) for v, c in zip(vals, counts)}
        diag["derivative_check"] = pieces.fd_gap
    if extra:
        diag.update(extra)
    return BoundsEstimate(float(lower), float(upper), psi, sigma, n, kind,
                          None if pieces is None else pieces.I_hat, diag)


def estimate_bounds(data: PanelDataset, fit: CmleFit, gamma=None, proj: ProjectionConfig | None = None,
                    target: EffectTarget | str = "ame", ell: int = 1, bandwidth=None,
                    R_n: float | None = None, check: bool = True) -> BoundsEstimate:
    """Plug-in estimates of the sharp bounds and their influence functions.

    Parameters
    ----------
    data : PanelDataset
    fit : CmleFit
        Supplies ``beta_hat`` and the influence vectors ``phi``.
    gamma : GammaEstimate, OracleGamma or dict, optional
        Estimates of ``P(S = j | X)``; a dict maps T to the estimate for that
        stratum. Fitted by local polynomials with the bandwidth rule if absent.
    proj : ProjectionConfig, optional
    target : EffectTarget or str
        ``"att"``, ``"atu"`` and ``"ate"`` dispatch to
        :func:`felogit.extensions.ate_bounds`.
    check : bool
        Compare analytic derivatives with central differences on a few units
        and record the largest gap under ``diagnostics["derivative_check"]``.
    """
    target = EffectTarget(target) if isinstance(target, str) else target
    if not fit.converged:
        raise EstimationError("CMLE did not converge")
    if fit.phi.shape[0] != data.n:
        raise ValidationError("fit and data have different numbers of units")
    if target.kind in ("att", "atu", "ate"):
        from .extensions import ate_bounds

        return ate_bounds(data, fit, gamma, proj, target=target, ell=ell, bandwidth=bandwidth,
                          R_n=R_n, check=check)[target.kind]
    pc = bounds_pieces(data, fit.beta_hat, target, gamma, fit, proj, ell, bandwidth, R_n, check=check)
    est = pc.h.mean(axis=0)
    psi = pc.h - est + fit.phi @ pc.d_beta.mean(axis=0).T + pc.gamma_term
    lower, upper = est
    if target.kind == "asf":
        lower, upper = np.clip([lower, upper], 0.0, 1.0)
    return _finish(lower, upper, psi, data.n, target.kind, pc)


def population_bounds(x, gam, beta, target: EffectTarget | str = "ame", ref: int | None = None):
    """Bound integrands ``E[h | X = x]`` for known ``P(S = j | X = x)``.

    Parameters
    ----------
    x : ndarray, shape (n, T, p)
    gam : ndarray, shape (n, T + 1)

    Returns
    -------
    ndarray, shape (n, 2)
    """
    target = EffectTarget(target) if isinstance(target, str) else target
    x = np.asarray(x, dtype=float)
    x = x[:, :, None] if x.ndim == 2 else x
    ref = x.shape[1] - 1 if ref is None else ref
    k = 0 if target.k is None else target.k
    ev = _evaluate(x, None, np.asarray(gam, float), np.atleast_1d(np.asarray(beta, float)), target, k, ref,
                   n_thr=x.shape[0], proj=ProjectionConfig("none"))
    return ev["h"]


def width_bound(pieces: _Pieces) -> float:
    """``|kappa| * mean(c_0 |lambda_{T+1}| / 4^T)``, the largest possible gap."""
    return abs(pieces.kappa) * float(np.mean(pieces.c0 * np.abs(pieces.lam_last) / 4.0 ** pieces.T))


# ---------------------------------------------------------------------------
# Confidence interval


def im_critical_value(width_ratio: float, alpha: float = 0.05) -> float:
    """Solve ``Phi(c + width_ratio) - Phi(-c) = 1 - alpha`` for c.

    ``width_ratio`` is ``sqrt(n) (upper - lower) / max sd``; the root lies
    between the one- and two-sided normal quantiles.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if not width_ratio >= 0:
        raise ValidationError("width ratio must be nonnegative")
    lo, hi = norm.ppf(1 - alpha) - 1e-9, norm.ppf(1 - alpha / 2) + 1e-9

    def f(c):
        return norm.cdf(c + width_ratio) - norm.cdf(-c) - (1 - alpha)

    if f(lo) >= 0:
        return float(norm.ppf(1 - alpha))
    return float(brentq(f, lo, hi, xtol=1e-12))


def ci1(est: BoundsEstimate, fit: CmleFit | None = None, alpha: float = 0.05, k: int = 0) -> ConfidenceInterval:
    """Imbens-Manski type interval around the estimated bounds.

    For the marginal effect, if a t-test of ``b_k = 0`` does not reject at
    level ``alpha`` the interval is extended to contain zero.
    """
    s11, s22 = est.sigma[0, 0], est.sigma[1, 1]
    if not (s11 > 0 and s22 > 0):
        raise EstimationError("degenerate bound variances; a larger sample is needed")
    sd = max(np.sqrt(s11), np.sqrt(s22))
    ratio = np.sqrt(est.n) * max(est.upper - est.lower, 0.0) / sd
    c = im_critical_value(ratio, alpha)
    lo = est.lower - c * np.sqrt(s11 / est.n)
    hi = est.upper + c * np.sqrt(s22 / est.n)
    if fit is not None and est.kind == "ame":
        tstat = fit.beta_hat[k] / fit.se[k]
        if abs(tstat) <= norm.ppf(1 - alpha / 2):
            lo, hi = min(lo, 0.0), max(hi, 0.0)
    return ConfidenceInterval(float(lo), float(hi), 1 - alpha, "CI1")


__all__ = [
    "BoundsEstimate",
    "ConfidenceInterval",
    "EffectWeights",
    "ProjectionConfig",
    "bounds_pieces",
    "c_from_gamma",
    "ci1",
    "estimate_bounds",
    "im_critical_value",
    "lambda_coeffs",
    "population_bounds",
    "width_bound",
]
