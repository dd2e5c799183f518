"""Treatment effects, the average structural function and varying T.

For a binary covariate ``D = X_k`` at the reference period, the effect on the
treated is ``E(Y | D = 1) - E[Lambda(x0'b + alpha) | D = 1]``, where ``x0`` is
the reference-period covariate with ``D`` switched off. Only the second term
is partially identified; its bounds come from the bounds machinery on the
treated units with their own local fits of ``P(S = j | X)``. The effect on the
untreated is symmetric, and the average effect mixes the two with the
empirical treatment share.
"""

from __future__ import annotations

import warnings

import numpy as np

from .bounds import (
    BoundsEstimate,
    ProjectionConfig,
    _finish,
    bounds_pieces,
    estimate_bounds,
)
from .cmle import CmleFit
from .errors import EstimationError, ValidationError
from .panel import PanelDataset
from .targets import EffectTarget, reference_period

__all__ = ["EffectTarget", "asf_bounds", "ate_bounds", "stratify_by_T", "treatment_indicator"]


def stratify_by_T(data: PanelDataset, min_units: int = 1, merge: bool = False):
    """Split a panel by number of periods.

    Returns a list of ``(T, sub_dataset, weight)`` with weights equal to the
    empirical shares. A stratum with fewer than ``min_units`` units raises,
    or with ``merge`` is truncated to the next shorter T and pooled with it.
    Pooling strata presumes the shocks are independent of ``(T, X, alpha)``;
    that is an assumption of the caller and is not tested.
    """
    T_new = np.asarray(data.T).copy()
    lengths = np.unique(T_new)
    for i, t in enumerate(lengths):
        size = int(np.sum(T_new == t))
        if size >= min_units:
            continue
        if not merge or i == 0:
            raise ValidationError(f"stratum T = {t} has {size} units, fewer than {min_units}")
        warnings.warn(f"stratum T = {t} truncated to T = {lengths[i - 1]}", RuntimeWarning)
        T_new[T_new == t] = lengths[i - 1]
    if not np.array_equal(T_new, data.T):
        data = PanelDataset(data.y, data.x, T_new, data.ids, data.covariates, data.effect_index)
    return [(T, data.subset(idx), idx.size / data.n) for T, idx in data.strata()]


def treatment_indicator(data: PanelDataset, k: int, ref: int | None = None) -> np.ndarray:
    """``X_k`` at the reference period, validated to be binary."""
    ref = reference_period(data.T) if ref is None else ref
    d = data.x[:, ref, k]
    if not np.all((d == 0) | (d == 1)):
        raise ValidationError(f"covariate {k} is not binary at the reference period")
    return d


def _group(data, fit, gamma, proj, mask, kind, k, ref, ell, bandwidth, R_n, check):
    """Per-unit terms of the treated (``kind="att"``) or untreated group.

    Returns full-length arrays: ``a`` (n, 2) with the group contributions to
    the (lower, upper) effect, the group-mean beta-derivatives ``d_beta``
    (2, p), the gamma corrections (n, 2) and the pieces.
    """
    n = data.n
    idx = np.flatnonzero(mask)
    sub = data.subset(idx)
    pc = bounds_pieces(sub, fit.beta_hat, EffectTarget(kind, k=k), gamma, fit, proj, ell,
                       bandwidth, R_n, ref=ref, check=check)
    y = data.y[idx, ref].astype(float)
    a = np.zeros((n, 2))
    g = np.zeros((n, 2))
    if kind == "att":
        # Y - h: the upper counterfactual bound gives the lower effect
        a[idx] = y[:, None] - pc.h[:, ::-1]
        g[idx] = -pc.gamma_term[:, ::-1]
        d_beta = -pc.d_beta[:, ::-1, :].mean(axis=0)
    else:
        a[idx] = pc.h - y[:, None]
        g[idx] = pc.gamma_term
        d_beta = pc.d_beta.mean(axis=0)
    return a, d_beta, g, pc


def ate_bounds(data: PanelDataset, fit: CmleFit, gamma=None, proj: ProjectionConfig | None = None,
               target: EffectTarget | None = None, ell: int = 1, bandwidth=None,
               R_n: float | None = None, check: bool = True) -> dict[str, BoundsEstimate]:
    """Bounds on the effects on the treated, the untreated and overall.

    Parameters
    ----------
    gamma : dict, optional
        ``{1: ..., 0: ...}`` with the ``P(S = j | X)`` estimates (or per-T
        dicts of them) for treated and untreated units. Fitted by local
        polynomials if absent.
    target : EffectTarget, optional
        Supplies the treatment index ``k``; defaults to the dataset's effect.

    Returns
    -------
    dict
        Keys ``"att"``, ``"atu"`` (when the group is nonempty) and ``"ate"``.
    """
    target = target or EffectTarget("ate")
    if not fit.converged:
        raise EstimationError("CMLE did not converge")
    k = target.effect_index(data)
    ref = reference_period(data.T)
    d = treatment_indicator(data, k, ref)
    n = data.n
    share = float(d.mean())
    gamma = gamma or {}
    if not isinstance(gamma, dict) or not set(gamma) <= {0, 1}:
        raise ValidationError("gamma for treatment effects must be a dict keyed by 1 and 0")
    phi = fit.phi
    out: dict[str, BoundsEstimate] = {}
    total = np.zeros((n, 2))
    total_grad = np.zeros((2, data.p))
    total_g = np.zeros((n, 2))
    for flag, kind, mask in ((1, "att", d == 1), (0, "atu", d == 0)):
        if not mask.any():
            continue
        a, d_beta, g, pc = _group(data, fit, gamma.get(flag), proj, mask, kind, k, ref, ell,
                                  bandwidth, R_n, check)
        pbar = mask.mean()
        est = a[mask].mean(axis=0)
        psi = mask[:, None] * (a - est) / pbar + phi @ d_beta.T + g / pbar
        out[kind] = _finish(est[0], est[1], psi, n, kind, pc,
                            {"group_share": float(pbar), "group_size": int(mask.sum())})
        total += a
        total_grad += pbar * d_beta
        total_g += g
    if not out:
        raise ValidationError("no units")
    est = total.mean(axis=0)
    psi = total - est + phi @ total_grad.T + total_g
    out["ate"] = _finish(est[0], est[1], psi, n, "ate", None, {"treated_share": share})
    return out


def asf_bounds(data: PanelDataset, fit: CmleFit, gamma=None, proj: ProjectionConfig | None = None,
               x0=None, **kwargs) -> BoundsEstimate:
    """Bounds on ``E[Lambda(x0'b + alpha)]``."""
    if x0 is None:
        raise ValidationError("x0 is required")
    return estimate_bounds(data, fit, gamma, proj, EffectTarget("asf", x0=tuple(np.atleast_1d(x0))), **kwargs)
