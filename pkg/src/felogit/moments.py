"""Truncated Hausdorff moment problem on [0, 1].

Membership in the moment space is decided through the lower and upper Hankel
determinants, extremal next moments come from the linear equations obtained by
setting the order T+1 determinants to zero, and estimated moment sequences are
projected back onto the moment space before use.

Most routines accept a single vector ``(m_0, ..., m_T)`` or a stack of vectors
with shape ``(n, T + 1)``; results follow the input shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REL_TOL = 1e-12
_TINY = 1e-300


class MomentDomainError(ValueError):
    """Raised when a sequence is not a moment vector of a law on [0, 1]."""


@dataclass(frozen=True)
class MomentVector:
    """Raw moments ``(m_0, ..., m_T)`` of a probability measure on [0, 1]."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 1 or m.size < 2:
            raise ValueError("a moment vector needs m_0 and at least m_1")
        if m[0] != 1.0:
            raise ValueError(f"m_0 must equal 1, got {m[0]!r}")
        object.__setattr__(self, "m", m)

    @property
    def T(self) -> int:
        return self.m.size - 1


@dataclass(frozen=True)
class HankelDiagnostics:
    """Lower/upper Hankel determinants for t = 1..T.

    ``first_boundary`` is the smallest t at which one of the two determinants
    vanishes (relative to its scale), or ``None`` for interior vectors.
    ``boundary_kind`` says which of the two vanished first.
    """

    lower_dets: np.ndarray
    upper_dets: np.ndarray
    lower_scale: np.ndarray
    upper_scale: np.ndarray
    member: bool
    first_boundary: int | None
    boundary_kind: str | None


@dataclass(frozen=True)
class ExtremalMoments:
    """Smallest and largest admissible value of m_{T+1}."""

    q_lower: float | np.ndarray
    q_upper: float | np.ndarray
    boundary: bool | np.ndarray


@dataclass(frozen=True)
class Projection:
    """Output of :func:`project_moments`.

    ``I_hat`` is the number of raw moments kept, ``lower_side`` tells whether
    entry ``I_hat + 1`` was set to the lower extremal moment, and ``q_next`` is
    the forced value of m_{T+1} when ``I_hat < T`` (NaN otherwise).
    """

    m_hat: np.ndarray
    I_hat: np.ndarray
    lower_side: np.ndarray
    q_next: np.ndarray


# ---------------------------------------------------------------------------
# Hankel matrices


def _hankel_shape(t: int, kind: str) -> tuple[int, int, bool]:
    """Return (size, offset, differenced) for the order-t Hankel matrix."""
    if t < 1:
        raise ValueError("Hankel order must be at least 1")
    even = t % 2 == 0
    if kind == "lower":
        return (t // 2 + 1, 0, False) if even else ((t + 1) // 2, 1, False)
    if kind == "upper":
        return (t // 2, 1, True) if even else ((t + 1) // 2, 0, True)
    raise ValueError(f"unknown Hankel kind {kind!r}")


def hankel_matrix(m: np.ndarray, t: int, kind: str) -> np.ndarray:
    """Build the lower or upper Hankel matrix of order ``t``.

    Only ``m[..., :t + 1]`` is used. Lower: ``(m_{i+j-2})`` for even t and
    ``(m_{i+j-1})`` for odd t. Upper: ``(m_{i+j-1} - m_{i+j})`` for even t and
    ``(m_{i+j-2} - m_{i+j-1})`` for odd t (indices i, j starting at 1).
    """
    m = np.asarray(m, dtype=float)
    size, off, diff = _hankel_shape(t, kind)
    idx = off + np.add.outer(np.arange(size), np.arange(size))
    if diff:
        return m[..., idx] - m[..., idx + 1]
    return m[..., idx]


def _det_and_scale(m: np.ndarray, t: int, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Determinant and its rounding scale.

    The scale is the product of the diagonal magnitudes before differencing,
    so an upper entry ``m_i - m_{i+1}`` that cancels to rounding noise is
    measured against ``|m_i| + |m_{i+1}|`` rather than against itself.
    """
    det = np.linalg.det(hankel_matrix(m, t, kind))
    size, off, diff = _hankel_shape(t, kind)
    idx = off + 2 * np.arange(size)
    diag = np.abs(m[..., idx])
    if diff:
        diag = diag + np.abs(m[..., idx + 1])
    scale = np.maximum(np.prod(diag, axis=-1), _TINY)
    return det, scale


def _all_dets(m: np.ndarray) -> tuple[np.ndarray, ...]:
    """Determinants and scales for t = 1..T, shape (..., T)."""
    T = m.shape[-1] - 1
    lo, up, slo, sup = [], [], [], []
    for t in range(1, T + 1):
        d, s = _det_and_scale(m, t, "lower")
        lo.append(d)
        slo.append(s)
        d, s = _det_and_scale(m, t, "upper")
        up.append(d)
        sup.append(s)
    return (np.stack(lo, -1), np.stack(up, -1), np.stack(slo, -1), np.stack(sup, -1))


def _first_boundary(lo, up, slo, sup, tol):
    """First vanishing index (1-based, 0 if none) and whether it was lower."""
    zl = lo <= tol * slo
    zu = up <= tol * sup
    z = zl | zu
    has = z.any(axis=-1)
    first = np.where(has, np.argmax(z, axis=-1) + 1, 0)
    pos = np.maximum(first - 1, 0)
    is_lower = np.take_along_axis(zl, pos[..., None], axis=-1)[..., 0]
    return first, is_lower & has


def _check_m0(m: np.ndarray) -> None:
    if m.shape[-1] < 2:
        raise ValueError("a moment vector needs m_0 and at least m_1")
    if not np.allclose(m[..., 0], 1.0, rtol=0.0, atol=1e-12):
        raise ValueError("m_0 must equal 1")


def hankel_determinants(m, tol: float = REL_TOL) -> HankelDiagnostics:
    """Hankel determinants and membership diagnostics for one moment vector.

    Parameters
    ----------
    m : array_like or MomentVector
        ``(m_0, ..., m_T)`` with ``m_0 = 1``.
    tol : float
        Relative tolerance; a determinant counts as nonnegative when it is at
        least ``-tol`` times the product of the absolute diagonal entries.

    Returns
    -------
    HankelDiagnostics
    """
    m = np.asarray(getattr(m, "m", m), dtype=float)
    if m.ndim != 1:
        raise ValueError("hankel_determinants expects a single vector")
    _check_m0(m)
    lo, up, slo, sup = _all_dets(m)
    member = bool(np.all(lo >= -tol * slo) and np.all(up >= -tol * sup))
    first, is_lower = _first_boundary(lo, up, slo, sup, tol)
    first = int(first)
    return HankelDiagnostics(
        lower_dets=lo,
        upper_dets=up,
        lower_scale=slo,
        upper_scale=sup,
        member=member,
        first_boundary=first if first > 0 else None,
        boundary_kind=(("lower" if is_lower else "upper") if first > 0 else None),
    )


def is_member(m, tol: float = REL_TOL) -> np.ndarray | bool:
    """Vectorised membership test for one or many moment vectors."""
    m = np.asarray(getattr(m, "m", m), dtype=float)
    lo, up, slo, sup = _all_dets(m)
    out = np.all(lo >= -tol * slo, axis=-1) & np.all(up >= -tol * sup, axis=-1)
    return bool(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Linear solves for the next moment


def _solve_next(window: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``H_t(window, q) = 0`` for q where t = window length.

    The determinant is affine in q (q only enters the bottom-right corner), so
    two evaluations give intercept and slope. Returns ``(q, degenerate)``
    where ``degenerate`` flags a slope that is negligible next to the
    diagonal of the cofactor matrix.
    """
    t = window.shape[-1]
    ext0 = np.concatenate([window, np.zeros(window.shape[:-1] + (1,))], axis=-1)
    ext1 = ext0.copy()
    ext1[..., -1] = 1.0
    h0 = hankel_matrix(ext0, t, kind)
    f0 = np.linalg.det(h0)
    f1 = np.linalg.det(hankel_matrix(ext1, t, kind))
    slope = f1 - f0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -f0 / slope
    if h0.shape[-1] > 1:
        cof = h0[..., :-1, :-1]
        scale = np.prod(np.abs(np.diagonal(cof, axis1=-2, axis2=-1)), axis=-1)
        degenerate = np.abs(slope) <= 1e-10 * scale
    else:
        degenerate = np.zeros(np.shape(slope), dtype=bool)
    degenerate = degenerate | ~np.isfinite(q)
    return q, degenerate


def _atoms_next(m: np.ndarray, start: int, kind: str) -> float:
    """Next moment of the unique measure with moments ``m`` (boundary case).

    Fallback for :func:`extend_boundary` when the one-step solve is singular:
    the null vector of the vanishing Hankel matrix gives a polynomial whose
    roots carry the support, then the weights are fitted on the moments.
    """
    T = m.size - 1
    mat = hankel_matrix(m, start, kind)
    _, _, vt = np.linalg.svd(mat)
    coef = vt[-1]
    roots = np.roots(coef[::-1]) if coef.size > 1 else np.array([])
    roots = roots[np.abs(roots.imag) < 1e-8].real
    pts = [r for r in roots if -1e-8 <= r <= 1 + 1e-8]
    odd = start % 2 == 1
    if kind == "lower" and odd:
        pts.append(0.0)
    if kind == "upper":
        pts.append(1.0)
        if not odd:
            pts.append(0.0)
    pts = np.clip(np.unique(np.round(pts, 12)), 0.0, 1.0)
    V = np.vander(pts, T + 1, increasing=True).T
    w, *_ = np.linalg.lstsq(V, m, rcond=None)
    w = np.clip(w, 0.0, None)
    return float(np.sum(w * pts ** (T + 1)))


def extend_boundary(m: np.ndarray, start: int, kind: str, upto: int) -> np.ndarray:
    """Extend boundary moment vectors by the unique one-step solutions.

    Parameters
    ----------
    m : ndarray, shape (..., L)
        Moment vectors whose entries ``0..start`` are valid and whose first
        vanishing Hankel determinant has order ``start`` and type ``kind``.
    start : int
        First boundary index T'.
    kind : {"lower", "upper"}
    upto : int
        Last index to fill.

    Returns
    -------
    ndarray, shape (..., upto + 1)
        Entries beyond ``start`` are recomputed; each solves
        ``H_{T'}(m_{s-T'}, ..., m_{s-1}, q) = 0``.
    """
    m = np.asarray(m, dtype=float)
    out = np.zeros(m.shape[:-1] + (upto + 1,))
    keep = min(start, upto) + 1
    out[..., :keep] = m[..., :keep]
    for s in range(start + 1, upto + 1):
        window = out[..., s - start : s]
        q, bad = _solve_next(window, kind)
        if np.any(bad):
            flat = out.reshape(-1, upto + 1)
            qf = np.atleast_1d(q).reshape(-1).copy()
            for i in np.flatnonzero(np.atleast_1d(bad).reshape(-1)):
                qf[i] = _atoms_next(flat[i, :s], start, kind)
            q = qf.reshape(np.shape(q))
        out[..., s] = np.clip(q, 0.0, 1.0)
    return out


def extremal_moments(m, tol: float = REL_TOL) -> ExtremalMoments:
    """Sharp lower and upper bounds on the next moment ``m_{T+1}``.

    Interior vectors use the linear solves of ``H_lower_{T+1}(m, q) = 0`` and
    ``H_upper_{T+1}(m, q) = 0``. Boundary vectors determine their measure, so
    both bounds equal the unique extension.

    Parameters
    ----------
    m : array_like, shape (T + 1,) or (n, T + 1)
    tol : float
        Relative determinant tolerance.

    Raises
    ------
    MomentDomainError
        If some vector is not in the moment space.
    """
    m = np.asarray(getattr(m, "m", m), dtype=float)
    single = m.ndim == 1
    M = np.atleast_2d(m)
    _check_m0(M)
    T = M.shape[-1] - 1
    lo, up, slo, sup = _all_dets(M)
    member = np.all(lo >= -tol * slo, axis=-1) & np.all(up >= -tol * sup, axis=-1)
    if not np.all(member):
        bad = np.flatnonzero(~member)
        raise MomentDomainError(f"not a moment vector (rows {bad[:10].tolist()})")
    first, is_lower = _first_boundary(lo, up, slo, sup, tol)
    ql = np.empty(M.shape[0])
    qu = np.empty(M.shape[0])
    inner = first == 0
    if np.any(inner):
        ql[inner], _ = _solve_next(M[inner], "lower")
        qu[inner], _ = _solve_next(M[inner], "upper")
    for tp in np.unique(first[~inner]):
        for low in (True, False):
            rows = (first == tp) & (is_lower == low)
            if np.any(rows):
                ext = extend_boundary(M[rows], int(tp), "lower" if low else "upper", T + 1)
                ql[rows] = qu[rows] = ext[:, T + 1]
    ql = np.clip(ql, 0.0, 1.0) + 0.0
    qu = np.clip(np.maximum(qu, ql), 0.0, 1.0) + 0.0
    boundary = ~inner
    if single:
        return ExtremalMoments(float(ql[0]), float(qu[0]), bool(boundary[0]))
    return ExtremalMoments(ql, qu, boundary)


def lp_oracle_extremal(
    m,
    grid_size: int = 10_001,
    extra_points=None,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Extremal next moments from a linear program over a grid on [0, 1].

    Independent check of :func:`extremal_moments`. The LP is solved through
    its dual, ``max y'm`` subject to ``sum_t y_t u^t <= u^{T+1}`` at each grid
    point (sign flipped for the maximum; rows are expressed in the shifted
    Chebyshev basis for conditioning), with an exchange loop that only
    hands the HiGHS solver the currently binding grid points.

    Parameters
    ----------
    m : array_like
        Moment vector ``(m_0, ..., m_T)``.
    grid_size : int
        Number of uniform grid points, endpoints included.
    extra_points : array_like, optional
        Additional support points appended to the grid. Boundary vectors are
        only representable when their atoms belong to the grid.
    """
    from scipy.optimize import linprog

    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    m = np.asarray(getattr(m, "m", m), dtype=float)
    _check_m0(m)
    T = m.size - 1
    grid = np.linspace(0.0, 1.0, grid_size)
    extra = np.empty(0)
    if extra_points is not None:
        extra = np.clip(np.asarray(extra_points, float).ravel(), 0, 1)
        grid = np.union1d(grid, extra)
    # constraints in the shifted Chebyshev basis; monomials up to u^{T+1} are too ill-conditioned
    A = np.polynomial.chebyshev.chebvander(2 * grid - 1, T)
    c = grid ** (T + 1)
    to_cheb = np.array([np.polynomial.Chebyshev.basis(t, domain=[0, 1]).convert(kind=np.polynomial.Polynomial).coef
                        .tolist() + [0.0] * (T - t) for t in range(T + 1)])
    m = to_cheb @ m
    free = [(None, None)] * (T + 1)
    start = np.union1d(np.linspace(0, grid.size - 1, 4 * (T + 2) + 1).astype(int),
                       np.searchsorted(grid, extra))

    def primal(sign: float) -> float:
        # on the boundary a nonnegative polynomial vanishing on the support is a recession
        # direction of the dual, and rounding can make it look improving
        res = linprog(sign * c, A_eq=A.T, b_eq=m, bounds=(0, None), method="highs")
        if res.status != 0:
            raise MomentDomainError(f"vector outside the moment space ({res.message})")
        return float(c @ res.x)

    def solve(sign: float) -> float:
        active = start
        for _ in range(200):
            res = linprog(-sign * m, A_ub=sign * A[active], b_ub=sign * c[active],
                          bounds=free, method="highs")
            if res.status == 3:
                # a restricted dual can be unbounded when the full one is not
                if active.size == grid.size:
                    return primal(sign)
                dense = np.linspace(0, grid.size - 1, min(grid.size, 4 * active.size)).astype(int)
                active = np.union1d(active, dense)
                continue
            if res.status != 0:
                raise MomentDomainError(f"LP failed: {res.message}")
            viol = sign * (A @ res.x - c)
            pad = np.r_[-np.inf, viol, -np.inf]
            peaks = np.flatnonzero((viol >= pad[:-2]) & (viol >= pad[2:]) & (viol > tol))
            peaks = np.setdiff1d(peaks, active)
            if peaks.size == 0:
                return float(m @ res.x)
            active = np.union1d(active, peaks)
        raise MomentDomainError("LP exchange loop did not converge")

    return solve(1.0), solve(-1.0)


# ---------------------------------------------------------------------------
# Projection onto the moment space


def project_moments(
    m_tilde,
    n: int,
    sigma_lower=None,
    sigma_upper=None,
    c_n: float | None = None,
    rule: str | None = None,
) -> Projection:
    """Project estimated moments onto the moment space.

    The first ``I_hat`` raw moments are kept, where ``I_hat`` is the largest t
    such that every Hankel determinant of order at most t clears its
    threshold. Entry ``I_hat + 1`` is set to the lower or upper extremal
    moment of the kept prefix, on the side whose determinant failed by more,
    and the rest follows from the unique boundary extension.

    Parameters
    ----------
    m_tilde : array_like, shape (T + 1,) or (n_obs, T + 1)
        Raw moment estimates with ``m_0 = 1``.
    n : int
        Sample size driving the thresholds.
    sigma_lower, sigma_upper : array_like, optional
        Standard-error scales of the lower/upper determinants, shape
        ``(..., T)``. With them the thresholds are
        ``sigma * sqrt(2 ln ln n)`` per determinant.
    c_n : float, optional
        Threshold on the product of lower and upper determinants, used when no
        scales are given. Defaults to ``n ** (-1/3)``.
    rule : {"variance", "constant", "none"}, optional
        Forces a rule. ``"none"`` only projects vectors outside the space
        (thresholds set to the membership tolerance).
    """
    mt = np.asarray(getattr(m_tilde, "m", m_tilde), dtype=float)
    single = mt.ndim == 1
    M = np.atleast_2d(mt)
    _check_m0(M)
    nobs, T = M.shape[0], M.shape[-1] - 1
    lo, up, slo, sup = _all_dets(M)
    if rule is None:
        rule = "variance" if sigma_lower is not None and sigma_upper is not None else "constant"

    if rule == "variance":
        kappa = np.sqrt(max(2.0 * np.log(np.log(n)), 0.0)) if n > np.e else 0.0
        cl = kappa * np.atleast_2d(np.asarray(sigma_lower, float)).reshape(nobs, T)
        cu = kappa * np.atleast_2d(np.asarray(sigma_upper, float)).reshape(nobs, T)
        passed = (lo > cl) & (up > cu)
        score_lo = lo / np.maximum(cl, _TINY)
        score_up = up / np.maximum(cu, _TINY)
    elif rule == "constant":
        cn = n ** (-1.0 / 3.0) if c_n is None else float(c_n)
        passed = lo * up > cn
        score_lo, score_up = lo, up
    elif rule == "none":
        passed = (lo > REL_TOL * slo) & (up > REL_TOL * sup)
        score_lo, score_up = lo / slo, up / sup
    else:
        raise ValueError(f"unknown projection rule {rule!r}")

    I_hat = np.where(passed.all(axis=-1), T, np.argmin(passed, axis=-1))
    pos = np.minimum(I_hat, T - 1)
    s_lo = np.take_along_axis(score_lo, pos[:, None], axis=-1)[:, 0]
    s_up = np.take_along_axis(score_up, pos[:, None], axis=-1)[:, 0]
    lower_side = s_lo <= s_up

    m_hat, q_next = complete_from_prefix(M, I_hat, lower_side)
    if single:
        return Projection(m_hat[0], I_hat[0], lower_side[0], q_next[0])
    return Projection(m_hat, I_hat, lower_side, q_next)


def complete_from_prefix(M: np.ndarray, I_hat: np.ndarray, lower_side: np.ndarray):
    """Keep ``M[:, :I_hat + 1]`` and fill the rest on the boundary.

    Rows with ``I_hat == T`` are returned unchanged (``q_next`` NaN). Rows with
    ``I_hat == 0`` become the point mass at ``clip(M[:, 1], 0, 1)``. Otherwise
    entry ``I_hat + 1`` is the lower (``lower_side``) or upper extremal moment
    of the kept prefix and later entries follow by boundary extension.

    Returns
    -------
    m_hat : ndarray, shape (n, T + 1)
    q_next : ndarray, shape (n,)
        The implied value of m_{T+1}.
    """
    M = np.asarray(M, dtype=float)
    nobs, T = M.shape[0], M.shape[1] - 1
    I_hat = np.asarray(I_hat).reshape(nobs)
    lower_side = np.asarray(lower_side, dtype=bool).reshape(nobs)
    m_hat = M.copy()
    q_next = np.full(nobs, np.nan)
    dirac = I_hat == 0
    if np.any(dirac):
        u = np.clip(M[dirac, 1], 0.0, 1.0)
        pw = u[:, None] ** np.arange(T + 2)
        m_hat[dirac] = pw[:, : T + 1]
        q_next[dirac] = pw[:, T + 1]
    for i_hat in np.unique(I_hat):
        if i_hat == 0 or i_hat >= T:
            continue
        for low in (True, False):
            rows = (I_hat == i_hat) & (lower_side == low)
            if not np.any(rows):
                continue
            kind = "lower" if low else "upper"
            prefix = M[rows, : i_hat + 1]
            q, _ = _solve_next(prefix, kind)
            seq = np.concatenate([prefix, np.clip(q, 0.0, 1.0)[:, None]], axis=-1)
            ext = extend_boundary(seq, int(i_hat) + 1, kind, T + 1)
            m_hat[rows] = ext[:, : T + 1]
            q_next[rows] = ext[:, T + 1]
    return m_hat, q_next


def interior_extremal(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper next moments from the order T+1 linear solves, no checks."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return _solve_next(m, "lower")[0], _solve_next(m, "upper")[0]


def extremal_gradient(m: np.ndarray, q: np.ndarray, kind: str) -> np.ndarray:
    """Gradient of the interior extremal moment with respect to ``m``.

    ``q`` solves ``f(m, q) = det H_{T+1}(m, q) = 0``, so by the implicit
    function theorem ``dq/dm_k = -(df/dm_k) / (df/dq)``. Both partials are
    traces of the adjugate against the constant matrices ``dH/dm_k``; the
    adjugate is built from cofactors since ``H(m, q)`` is singular.

    Returns
    -------
    ndarray, shape (n, T + 1)
        Entry 0 (the derivative in m_0) is included for completeness.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n, T = m.shape[0], m.shape[1] - 1
    ext = np.concatenate([m, np.asarray(q, float).reshape(n, 1)], axis=1)
    t = T + 1
    H = hankel_matrix(ext, t, kind)
    K = H.shape[-1]
    if K == 1:
        cof = np.ones((n, 1, 1))
    else:
        cof = np.empty_like(H)
        for i in range(K):
            for j in range(K):
                minor = np.delete(np.delete(H, i, axis=-2), j, axis=-1)
                cof[:, i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    size, off, diff = _hankel_shape(t, kind)
    idx = off + np.add.outer(np.arange(size), np.arange(size))
    df = np.zeros((n, t + 1))
    for i in range(K):
        for j in range(K):
            df[:, idx[i, j]] += cof[:, i, j]
            if diff:
                df[:, idx[i, j] + 1] -= cof[:, i, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        return -df[:, : T + 1] / df[:, T + 1 : T + 2]


def dirac_moments(u: float, T: int) -> np.ndarray:
    """Moments ``(1, u, ..., u^T)`` of the point mass at ``u``."""
    return float(u) ** np.arange(T + 1)


# ---------------------------------------------------------------------------
# Minimax approximation of u^{T+1}


@dataclass(frozen=True)
class ChebyshevApprox:
    """Best sup-norm approximation of ``u^{T+1}`` on [0, 1] by degree-T polynomials.

    Attributes
    ----------
    T : int
    b : ndarray, shape (T + 1,)
        Coefficients of ``P*_T(u) = sum_t b_t u^t``.
    sup_err : float
        ``1 / (2 * 4^T)``.
    extrema_plus, extrema_minus : ndarray
        Points of [0, 1] where ``u^{T+1} - P*_T(u)`` reaches ``+sup_err`` and
        ``-sup_err`` respectively, endpoints included.
    """

    T: int
    b: np.ndarray
    sup_err: float
    extrema_plus: np.ndarray
    extrema_minus: np.ndarray

    def residual(self, u):
        """``u^{T+1} - P*_T(u)``, the rescaled monic Chebyshev polynomial."""
        u = np.asarray(u, dtype=float)
        return u ** (self.T + 1) - np.polynomial.polynomial.polyval(u, self.b)


def _shifted_chebyshev_int(n: int) -> list[int]:
    """Integer power coefficients of ``T_n(2u - 1)``."""
    prev, cur = [1], [-1, 2]
    if n == 0:
        return prev
    for _ in range(n - 1):
        nxt = [0] * (len(cur) + 1)
        for i, c in enumerate(cur):
            nxt[i] += -2 * c
            nxt[i + 1] += 4 * c
        for i, c in enumerate(prev):
            nxt[i] -= c
        prev, cur = cur, nxt
    return cur


def chebyshev_pstar(T: int) -> ChebyshevApprox:
    """Coefficients of the minimax approximation ``P*_T`` of ``u^{T+1}``.

    ``u^{T+1} - P*_T(u)`` is the Chebyshev polynomial of degree T+1 moved to
    [0, 1] and scaled to be monic, ``2^{-2T-1} T_{T+1}(2u - 1)``. The
    coefficients are formed in exact integer arithmetic before the final
    division by a power of two.
    """
    T = int(T)
    if T < 1:
        raise ValueError("T must be at least 1")
    coef = _shifted_chebyshev_int(T + 1)
    denom = 2 ** (2 * T + 1)
    assert coef[-1] == denom
    b = np.array([-c / denom for c in coef[:-1]], dtype=float)
    j = np.arange(T + 2)
    pts = (1.0 + np.cos(j * np.pi / (T + 1))) / 2.0
    pts[0], pts[-1] = 1.0, 0.0
    return ChebyshevApprox(
        T=T,
        b=b,
        sup_err=1.0 / (2.0 * 4.0**T),
        extrema_plus=np.sort(pts[j % 2 == 0]),
        extrema_minus=np.sort(pts[j % 2 == 1]),
    )
