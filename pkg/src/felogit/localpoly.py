"""Local polynomial estimation of P(S = j | X = x) and its bandwidth rule.

Covariates are flattened to the ``d = p T`` vector ``(X_1', ..., X_T')'`` and
each column is standardised to unit standard deviation. Columns without
variation are dropped (the fit is then local in the remaining dimensions
only). Bandwidths live on the standardised scale and may differ by target j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .cmle import CmleFit, log_symmetric_sums
from .errors import EstimationError, ValidationError
from .panel import PanelDataset

_KERNEL_L2 = 1.0 / (2.0 * np.sqrt(np.pi))  # integral of the squared Gaussian kernel
_KERNEL_MU2 = 1.0
H_MIN, H_MAX = 0.05, 5.0


def _exponents(d: int, ell: int) -> list[tuple[int, ...]]:
    out = [()]
    for deg in range(1, ell + 1):
        out.extend(combinations_with_replacement(range(d), deg))
    return out


def _design(diff: np.ndarray, exps) -> np.ndarray:
    cols = []
    for e in exps:
        col = np.ones(diff.shape[:-1])
        for j in e:
            col = col * diff[..., j]
        cols.append(col)
    return np.stack(cols, axis=-1)


def rule_of_thumb(n: int, d: int) -> float:
    """``1.06 n^{-1/(d+4)}`` on the standardised scale."""
    return 1.06 * n ** (-1.0 / (d + 4))


def indicator_matrix(s: np.ndarray, T: int) -> np.ndarray:
    """Rows ``(1{S_i = 0}, ..., 1{S_i = T})``."""
    s = np.asarray(s, dtype=int)
    return (s[:, None] == np.arange(T + 1)[None, :]).astype(float)


@dataclass
class GammaEstimate:
    """Fitted local polynomial regressions of the S indicators on X.

    Parameters
    ----------
    x : ndarray, shape (n, d)
        Flattened training covariates.
    z : ndarray, shape (n, T + 1)
        Responses, normally ``indicator_matrix(S, T)``.
    h : ndarray, shape (T + 1,)
        Bandwidth per target, on the standardised scale.
    ell : int
        Polynomial degree.
    """

    x: np.ndarray
    z: np.ndarray
    h: np.ndarray
    ell: int = 1
    chunk: int = 256
    _center: np.ndarray = field(init=False, repr=False)
    _scale: np.ndarray = field(init=False, repr=False)
    _keep: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.z = np.asarray(self.z, dtype=float)
        self.h = np.broadcast_to(np.asarray(self.h, dtype=float), (self.z.shape[1],)).copy()
        if np.any(self.h <= 0):
            raise ValidationError("bandwidths must be positive")
        sd = self.x.std(axis=0)
        self._keep = sd > 1e-12 * np.maximum(np.abs(self.x).max(axis=0), 1.0)
        self._center = self.x.mean(axis=0)
        self._scale = np.where(self._keep, sd, 1.0)
        self._cache = {}

    @property
    def T(self) -> int:
        return self.z.shape[1] - 1

    @property
    def d(self) -> int:
        return int(self._keep.sum())

    def standardize(self, xq) -> np.ndarray:
        xq = np.atleast_2d(np.asarray(xq, dtype=float))
        return ((xq - self._center) / self._scale)[:, self._keep]

    def _fit_unique(self, zq: np.ndarray, want_weights: bool):
        """Raw intercepts and smoother cross-products at standardised queries."""
        Z = self.standardize(self.x)
        exps = _exponents(Z.shape[1], self.ell)
        M = len(exps)
        J = self.z.shape[1]
        nq = zq.shape[0]
        raw = np.empty((nq, J))
        wcross = np.empty((nq, J, J)) if want_weights else None
        for a in range(0, nq, self.chunk):
            q = zq[a : a + self.chunk]
            diff = Z[None, :, :] - q[:, None, :]
            ells = {}
            for h_val in np.unique(self.h):
                targets = np.flatnonzero(self.h == h_val)
                hq = np.full(q.shape[0], h_val)
                sol = None
                for _ in range(6):
                    u = diff / hq[:, None, None]
                    K = np.exp(-0.5 * np.sum(u * u, axis=-1))
                    P = _design(u, exps)
                    G = np.einsum("bn,bnm,bnk->bmk", K, P, P)
                    eig = np.linalg.eigvalsh(G)
                    bad = ~(eig[:, 0] > 1e-10 * np.maximum(eig[:, -1], 1e-300))
                    if not bad.any():
                        sol = np.linalg.solve(G, np.eye(M)[0][None, :, None].repeat(q.shape[0], 0))[..., 0]
                        break
                    hq = np.where(bad, 2.0 * hq, hq)
                if sol is None:
                    raise EstimationError("singular local design after five bandwidth doublings")
                L = K * np.einsum("bnm,bm->bn", P, sol)  # equivalent-kernel weights
                raw[a : a + q.shape[0], targets] = L @ self.z[:, targets]
                for j in targets:
                    ells[j] = L
            if want_weights:
                for j in range(J):
                    for k in range(j, J):
                        v = np.einsum("bn,bn->b", ells[j], ells[k])
                        wcross[a : a + q.shape[0], j, k] = v
                        wcross[a : a + q.shape[0], k, j] = v
        return raw, wcross

    def fit(self, xq, want_weights: bool = False):
        """Raw fits, clamped probabilities and smoother cross-products.

        Returns
        -------
        raw : ndarray, shape (m, T + 1)
        prob : ndarray, shape (m, T + 1)
            Raw fits clipped to [0, 1] and renormalised to sum to one.
        wcross : ndarray, shape (m, T + 1, T + 1) or None
            ``sum_i l_i^j(x) l_i^k(x)`` for the equivalent-kernel weights of
            targets j and k, used for delta-method variances.
        """
        zq = self.standardize(xq)
        if zq.shape[1] == 0:
            uq, inv = zq[:1], np.zeros(zq.shape[0], dtype=int)
        else:
            uq, inv = np.unique(zq, axis=0, return_inverse=True)
            inv = np.asarray(inv).reshape(-1)
        raw_u, w_u = self._fit_unique(uq, want_weights)
        raw = raw_u[inv]
        prob = clamp_probabilities(raw, self.z.mean(axis=0))
        return raw, prob, (w_u[inv] if want_weights else None)

    def __call__(self, xq) -> np.ndarray:
        return self.fit(xq)[1]

    def at_sample(self, want_weights: bool = True):
        """``(prob, wcross)`` at the training points, cached."""
        key = bool(want_weights)
        if key not in self._cache:
            _, prob, w = self.fit(self.x, want_weights)
            self._cache[key] = (prob, w)
        return self._cache[key]


def clamp_probabilities(raw: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    """Clip to [0, 1] and renormalise each row to a probability vector."""
    p = np.clip(raw, 0.0, 1.0)
    tot = p.sum(axis=-1, keepdims=True)
    if np.any(tot <= 0):
        if fallback is None:
            raise EstimationError("local fit is nonpositive for every value of S")
        p = np.where(tot > 0, p, fallback)
        tot = p.sum(axis=-1, keepdims=True)
    return p / tot


@dataclass(frozen=True)
class OracleGamma:
    """Known conditional law of S given X, with the GammaEstimate interface."""

    func: object
    x: np.ndarray

    def __call__(self, xq):
        return np.asarray(self.func(np.atleast_2d(xq)), dtype=float)

    def at_sample(self, want_weights: bool = True):
        return self(self.x), None


def _flat(data: PanelDataset) -> tuple[np.ndarray, int]:
    y, x = data.balanced_arrays()
    return x.reshape(data.n, -1), y.shape[1]


def local_poly_fit(data: PanelDataset, x0, ell: int = 1, h=None) -> np.ndarray:
    """Clamped local polynomial estimates of ``P(S = j | X = x0)``, j = 0..T.

    Parameters
    ----------
    data : PanelDataset
        Balanced panel.
    x0 : array_like, shape (T, p), (d,) or (m, d)
        Query point(s), flattened as ``(x_1', ..., x_T')``.
    ell : int
        Polynomial degree.
    h : float or array_like, optional
        Bandwidth(s) on the standardised scale; rule of thumb by default.
    """
    X, T = _flat(data)
    if h is None:
        h = rule_of_thumb(data.n, X.shape[1])
    g = GammaEstimate(X, indicator_matrix(data.s, T), h, ell)
    x0 = np.asarray(x0, dtype=float)
    out = g(x0.reshape(-1, X.shape[1]))
    return out[0] if x0.size == X.shape[1] else out


def fit_gamma(data: PanelDataset, fit: CmleFit | None = None, ell: int = 1, h=None,
              R_n: float | None = None) -> GammaEstimate:
    """GammaEstimate on a balanced panel, with the bandwidth rule by default."""
    X, T = _flat(data)
    if h is None:
        if fit is None:
            raise ValidationError("bandwidth rule needs a CMLE fit")
        h = bandwidth_rule(data, fit, R_n)
    return GammaEstimate(X, indicator_matrix(data.s, T), h, ell)


# ---------------------------------------------------------------------------
# Bandwidth rule


def _pilot_alpha(y: np.ndarray, xb: np.ndarray, max_iter: int = 100) -> float:
    """Constant fixed effect maximising the full logit likelihood at fixed slope."""
    a = 0.0
    for _ in range(max_iter):
        pr = 1.0 / (1.0 + np.exp(-(xb + a)))
        g = np.sum(y - pr)
        hdiag = -np.sum(pr * (1 - pr))
        if hdiag > -1e-12:
            break
        step = -g / hdiag
        a += step
        if abs(a) > 50:
            raise FloatingPointError("pilot intercept diverges")
        if abs(step) < 1e-12:
            return a
    raise FloatingPointError("pilot intercept did not converge")


def pilot_gamma(xflat: np.ndarray, beta: np.ndarray, a: float, T: int, p: int) -> np.ndarray:
    """``P(S = t | X = x)`` when the fixed effect equals ``a`` for everybody."""
    x = xflat.reshape(xflat.shape[0], T, p)
    xb = x @ beta
    logC = log_symmetric_sums(x, beta)
    lognum = logC + a * np.arange(T + 1)
    logden = np.sum(np.logaddexp(0.0, xb + a), axis=1, keepdims=True)
    return np.exp(lognum - logden)


def bandwidth_rule(data: PanelDataset, fit: CmleFit, R_n: float | None = None,
                   return_details: bool = False):
    """Per-target bandwidths balancing integrated variance and squared bias.

    With a Gaussian product kernel in ``d = p T`` standardised dimensions,
    the squared bias is ``h^4 mu_2^2 E[(sum_j d^2 gamma_t / dz_j^2)^2]`` and the
    variance is ``kappa^d E[gamma_t (1 - gamma_t) / f(Z)] / (n h^d)``. Setting
    variance equal to ``R_n`` times squared bias gives
    ``h_t = (V_t / (n R_n A_t))^{1/(d+4)}``. The pilot gamma comes from a
    constant fixed effect fitted by maximum likelihood at the CMLE slope, and
    ``f`` from a Gaussian kernel density estimate.

    Parameters
    ----------
    R_n : float, optional
        Defaults to ``5 (n / 500)^2``.

    Returns
    -------
    ndarray, shape (T + 1,)
        Bandwidths on the standardised scale, clipped to [0.05, 5].
    """
    from scipy.stats import gaussian_kde

    X, T = _flat(data)
    n, p = data.n, data.p
    if R_n is None:
        R_n = 5.0 * (n / 500.0) ** 2
    g = GammaEstimate(X, indicator_matrix(data.s, T), 1.0)
    Z = g.standardize(X)
    d = Z.shape[1]
    if d == 0:
        h = np.full(T + 1, H_MAX)
        return (h, {}) if return_details else h
    beta = np.asarray(fit.beta_hat, float)
    try:
        a = _pilot_alpha(data.y, data.x @ beta)
    except FloatingPointError:
        warnings.warn("pilot fit diverged; using the rule-of-thumb bandwidth", RuntimeWarning)
        h = np.full(T + 1, rule_of_thumb(n, d))
        return (h, {"fallback": True}) if return_details else h

    scale = g._scale[g._keep]
    keep_idx = np.flatnonzero(g._keep)

    def gam(zz):
        xx = np.tile(g._center, (zz.shape[0], 1))
        xx[:, keep_idx] = zz * scale + g._center[keep_idx]
        return pilot_gamma(xx, beta, a, T, p)

    step = 1e-3
    g0 = gam(Z)
    lap = np.zeros_like(g0)
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        lap += (gam(Z + e) - 2.0 * g0 + gam(Z - e)) / step**2
    A = np.mean((_KERNEL_MU2 * lap) ** 2, axis=0)
    kde = gaussian_kde(Z.T) if d > 0 else None
    f = kde(Z.T)
    V = _KERNEL_L2**d * np.mean(g0 * (1.0 - g0) / f[:, None], axis=0)
    with np.errstate(divide="ignore"):
        h = (V / (n * R_n * A)) ** (1.0 / (d + 4))
    h = np.where(np.isfinite(h), h, H_MAX)
    h = np.clip(h, H_MIN, H_MAX)
    if return_details:
        return h, {"alpha": a, "A": A, "V": V, "R_n": R_n, "d": d}
    return h
