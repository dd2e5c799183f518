"""Effect targets and the per-unit polynomial weights they induce.

Each target is the average of ``g(U)`` with ``U = Lambda(x*'b + alpha)`` for a
reference covariate value ``x*``: ``g(u) = u (1 - u)`` (times ``b_k``) for the
marginal effect at the reference period, and ``g(u) = u`` for the average
structural function or the counterfactual terms of treatment effects. With
``rho_t = exp((x_t - x*)'b) - 1``, the target equals
``c_0(x) * int sum_t lambda_t u^t dmu``, where the ``lambda_t`` are the
coefficients of ``g(u) prod_t (1 + rho_t u)`` (the reference period's factor is
dropped for the marginal effect, where it equals one).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .cmle import esp, esp_leave_one_out
from .errors import ValidationError

KINDS = ("ame", "att", "atu", "ate", "asf")


@dataclass(frozen=True)
class EffectTarget:
    """What to estimate.

    Parameters
    ----------
    kind : {"ame", "att", "atu", "ate", "asf"}
    k : int, optional
        0-based covariate index; defaults to the dataset's effect index.
    x0 : sequence of float, optional
        Evaluation point for the average structural function.
    """

    kind: str = "ame"
    k: int | None = None
    x0: tuple | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KINDS:
            raise ValidationError(f"unknown target {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "asf":
            if self.x0 is None:
                raise ValidationError("the average structural function needs x0")
            x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
            if not np.all(np.isfinite(x0)):
                raise ValidationError("x0 must be finite")
            object.__setattr__(self, "x0", x0)

    def effect_index(self, data) -> int:
        return data.effect_index if self.k is None else int(self.k)


def reference_period(T_values) -> int:
    """0-based index of the reference period, the shortest panel's last period."""
    return int(np.min(T_values)) - 1


def reference_points(x: np.ndarray, kind: str, k: int, ref: int, x0=None) -> np.ndarray:
    """Reference covariate value ``x*`` per unit, shape (n, p).

    ``"att"`` and ``"atu"`` here denote the counterfactual terms: the reference
    period's covariates with ``x_k`` set to 0 (for the treated) or 1 (for the
    untreated).
    """
    if kind == "ame":
        return x[:, ref, :].copy()
    if kind in ("att", "atu"):
        xs = x[:, ref, :].copy()
        xs[:, k] = 0.0 if kind == "att" else 1.0
        return xs
    if kind == "asf":
        return np.broadcast_to(np.asarray(x0, float), (x.shape[0], x.shape[2])).copy()
    raise ValidationError(f"no reference point for target {kind!r}")


def _polymul_linear(poly: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Multiply each row polynomial by ``1 + rho u`` (increasing powers)."""
    out = np.zeros(poly.shape[:-1] + (poly.shape[-1] + 1,))
    out[..., :-1] += poly
    out[..., 1:] += rho[..., None] * poly
    return out


def lambda_batch(x: np.ndarray, xstar: np.ndarray, beta: np.ndarray, kind: str, ref: int,
                 derivs: bool = False):
    """Coefficients ``lambda_0..lambda_{T+1}`` for a block of units.

    Parameters
    ----------
    x : ndarray, shape (n, T, p)
    xstar : ndarray, shape (n, p)
    beta : ndarray, shape (p,)
    kind : str
        ``"ame"`` selects ``u (1 - u)`` and drops the reference period.
    ref : int
        Reference period index.

    Returns
    -------
    lam : ndarray, shape (n, T + 2)
    dlam : ndarray, shape (n, T + 2, p) or None
        Derivatives with respect to ``beta`` (the ``b_k`` factor of the
        marginal effect is not included).
    """
    n, T, p = x.shape
    dx = x - xstar[:, None, :]
    w = np.exp(dx @ beta)
    rho = w - 1.0
    if kind == "ame":
        base = np.tile([0.0, 1.0, -1.0], (n, 1))
        factors = [t for t in range(T) if t != ref]
    else:
        base = np.tile([0.0, 1.0], (n, 1))
        factors = list(range(T))
    lam = base
    for t in factors:
        lam = _polymul_linear(lam, rho[:, t])
    lam = lam[:, : T + 2]
    if lam.shape[1] < T + 2:
        lam = np.pad(lam, ((0, 0), (0, T + 2 - lam.shape[1])))
    if not derivs:
        return lam, None
    dlam = np.zeros((n, T + 2, p))
    for t in factors:
        poly = np.concatenate([np.zeros((n, 1)), base], axis=1)  # g(u) * u
        for s in factors:
            if s != t:
                poly = _polymul_linear(poly, rho[:, s])
        poly = poly[:, : T + 2]
        dlam[:, : poly.shape[1], :] += poly[:, :, None] * (w[:, t, None] * dx[:, t, :])[:, None, :]
    return lam, dlam


def esp_batch(x: np.ndarray, xstar: np.ndarray, beta: np.ndarray, derivs: bool = False):
    """``E_j = exp(-j x*'b) C_j(x, b)`` for j = 0..T and their beta-derivatives."""
    dx = x - xstar[:, None, :]
    w = np.exp(dx @ beta)
    E = esp(w)
    if not derivs:
        return E, None
    n, T, p = x.shape
    loo = esp_leave_one_out(w)  # (n, T, T): e_0..e_{T-1} without t
    dE = np.zeros((n, T + 1, p))
    dE[:, 1:, :] = np.einsum("nt,ntj,ntp->njp", w, loo, dx)
    return E, dE


def gamma_matrix(T: int) -> np.ndarray:
    """``G[t, j] = binom(T - t, j - t)`` for ``j >= t``, else 0."""
    G = np.zeros((T + 1, T + 1))
    for t in range(T + 1):
        for j in range(t, T + 1):
            G[t, j] = comb(T - t, j - t)
    return G
