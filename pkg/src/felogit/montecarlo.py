"""Simulation designs, population truths, the linear probability benchmark and
the replication harness.

All designs draw ``X_t ~ U(-1/2, 1/2)`` i.i.d. with a scalar slope and set
``alpha = -X_ref b0 + eta``:

* DGP1: ``eta = 0``.
* DGP2: ``eta ~ N(0, 1)``.
* DGP3: ``Lambda(eta)`` uniform over the interior points where the rescaled
  Chebyshev residual reaches its maximum (if ``lambda_{T+1}(X, b0) >= 0``) or
  its minimum (otherwise), so the approximation bias is as large as possible.
* DGP4: as DGP1 with logistic errors tied by a Gaussian copula with
  correlation ``2^{-|s-t|}``.
* DGP5: as DGP1 with ``N(0, 8/pi)`` errors.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import expit, logit
from scipy.stats import norm

from .bounds import ConfidenceInterval, ProjectionConfig, ci1, estimate_bounds, population_bounds
from .chebyshev import ci2, ci3, estimate_simple
from .cmle import esp, fit_cmle
from .errors import EstimationError, FelogitError, IdentificationError, ValidationError
from .localpoly import OracleGamma
from .moments import chebyshev_pstar
from .panel import PanelDataset, _atomic_write_text
from .targets import lambda_batch

DGPS = (1, 2, 3, 4, 5)
GL_NODES = 32  # per piece; x_t for t != ref is split at x_ref, so 64 per dimension
GH_NODES = 128


@dataclass(frozen=True)
class DgpConfig:
    """One simulation design.

    ``T_values`` draws each unit's number of periods uniformly from the given
    values (independently of everything else); ``T`` is then their maximum.
    """

    dgp: int = 1
    T: int = 2
    n: int = 500
    beta0: float = 1.0
    seed: int = 0
    reps: int = 200
    T_values: tuple | None = None

    def __post_init__(self):
        if self.dgp not in DGPS:
            raise ValidationError(f"dgp must be one of {DGPS}")
        if self.T_values is not None:
            tv = tuple(sorted(int(t) for t in self.T_values))
            if min(tv) < 2:
                raise ValidationError("every T must be at least 2")
            object.__setattr__(self, "T_values", tv)
            object.__setattr__(self, "T", tv[-1])
        if self.T < 2:
            raise ValidationError("T must be at least 2")
        if self.n < 1 or self.reps < 1:
            raise ValidationError("n and reps must be positive")
        if self.dgp == 3 and self.T_values is not None:
            raise ValidationError("DGP3 is only defined for balanced panels")

    @property
    def ref(self) -> int:
        return (min(self.T_values) if self.T_values else self.T) - 1


@dataclass(frozen=True)
class TruthRecord:
    delta: float
    lower: float
    upper: float
    method: str

    def __post_init__(self):
        tol = 1e-9
        if np.isnan(self.lower) and np.isnan(self.upper):
            return
        if not self.lower - tol <= self.delta <= self.upper + tol:
            raise EstimationError(f"truth out of order: {self.lower}, {self.delta}, {self.upper}")


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep`` of master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),)))


def dgp3_support(T: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior maximisers and minimisers of the Chebyshev residual on (0, 1)."""
    ch = chebyshev_pstar(T)
    inner = lambda pts: pts[(pts > 0) & (pts < 1)]  # noqa: E731
    return inner(ch.extrema_plus), inner(ch.extrema_minus)


def _lambda_last(x: np.ndarray, beta0: float, ref: int) -> np.ndarray:
    x3 = x[:, :, None]
    lam, _ = lambda_batch(x3, x3[:, ref, :], np.array([beta0]), "ame", ref)
    return lam[:, -1]


def generate(config: DgpConfig, rep: int = 0) -> PanelDataset:
    """Draw one dataset; identical for identical ``(config, rep)``."""
    rng = rep_rng(config.seed, rep)
    n, T, b = config.n, config.T, config.beta0
    x = rng.uniform(-0.5, 0.5, size=(n, T))
    Ti = rng.choice(config.T_values, size=n) if config.T_values else np.full(n, T)
    ref = config.ref
    if config.dgp == 2:
        eta = rng.standard_normal(n)
    elif config.dgp == 3:
        plus, minus = dgp3_support(T)
        pos = _lambda_last(x, b, ref) >= 0
        u = np.where(pos, rng.choice(plus, size=n), rng.choice(minus, size=n))
        eta = logit(u)
    else:
        eta = np.zeros(n)
    alpha = -x[:, ref] * b + eta
    if config.dgp == 4:
        lag = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
        chol = np.linalg.cholesky(0.5**lag)
        z = rng.standard_normal((n, T)) @ chol.T
        eps = logit(norm.cdf(z))
    elif config.dgp == 5:
        eps = rng.normal(0.0, np.sqrt(8.0 / np.pi), size=(n, T))
    else:
        eps = rng.logistic(size=(n, T))
    y = (x * b + alpha[:, None] + eps >= 0).astype(float)
    live = np.arange(T)[None, :] < Ti[:, None]
    return PanelDataset(np.where(live, y, 0.0), np.where(live, x, 0.0), T=Ti)


# ---------------------------------------------------------------------------
# Population quantities


def _eta_law(config: DgpConfig, x: np.ndarray):
    """Nodes (n_nodes,) or (n, n_nodes) and weights of eta given X."""
    if config.dgp == 2:
        z, w = hermegauss(GH_NODES)
        return z[None, :], (w / np.sqrt(2 * np.pi))[None, :]
    if config.dgp == 3:
        plus, minus = dgp3_support(config.T)
        k = max(plus.size, minus.size)
        pos = _lambda_last(x, config.beta0, config.ref) >= 0
        nodes = np.empty((x.shape[0], k))
        wts = np.empty((x.shape[0], k))
        for pts, rows in ((plus, pos), (minus, ~pos)):
            # pad with zero-weight copies of the first point
            padded = np.concatenate([pts, np.full(k - pts.size, pts[0])])
            pw = np.concatenate([np.full(pts.size, 1.0 / pts.size), np.zeros(k - pts.size)])
            nodes[rows] = logit(padded)
            wts[rows] = pw
        return nodes, wts
    return np.zeros((1, 1)), np.ones((1, 1))


def true_gamma(config: DgpConfig, x: np.ndarray) -> np.ndarray:
    """``P(S = j | X = x)`` for DGPs 1-3, shape (n, T + 1).

    Parameters
    ----------
    x : ndarray, shape (n, T) or (n, T, 1)
    """
    if config.dgp not in (1, 2, 3):
        raise ValidationError("the conditional law of S is only available for DGPs 1-3")
    x = np.asarray(x, dtype=float).reshape(x.shape[0], -1)
    b = config.beta0
    nodes, wts = _eta_law(config, x)
    base = -x[:, config.ref] * b
    out = np.zeros((x.shape[0], x.shape[1] + 1))
    for j in range(nodes.shape[1]):
        alpha = base + nodes[:, j]
        idx = x * b + alpha[:, None]
        # P(S = s) = e_s(odds) * prod(1 - p)
        odds = np.exp(idx)
        out += wts[:, j, None] * esp(odds) * np.prod(expit(-idx), axis=1, keepdims=True)
    return out


def oracle_gamma(config: DgpConfig, data: PanelDataset) -> OracleGamma:
    """Known ``P(S = j | X)`` with the interface of a local polynomial fit."""
    xflat = data.x.reshape(data.n, -1)
    return OracleGamma(lambda xq: true_gamma(config, xq), xflat)


def _x_blocks(T: int, ref: int, nodes: int):
    """Composite Gauss-Legendre grid on [-1/2, 1/2]^T split at x_t = x_ref.

    Yields one ``(points, weights)`` block per node of the reference period so
    that large T never materialises the whole tensor grid.
    """
    u, w = leggauss(nodes)
    u, w = (u + 1) / 2, w / 2  # on [0, 1]
    xr = u - 0.5
    for a, wa in zip(xr, w):
        lo_pts, lo_w = -0.5 + (a + 0.5) * u, (a + 0.5) * w
        hi_pts, hi_w = a + (0.5 - a) * u, (0.5 - a) * w
        one = np.concatenate([lo_pts, hi_pts])
        one_w = np.concatenate([lo_w, hi_w])
        others = T - 1
        grids = np.meshgrid(*([one] * others), indexing="ij")
        gw = np.meshgrid(*([one_w] * others), indexing="ij")
        block = np.empty((one.size**others, T))
        cols = [g.ravel() for g in grids]
        c = 0
        for t in range(T):
            if t == ref:
                block[:, t] = a
            else:
                block[:, t] = cols[c]
                c += 1
        yield block, wa * np.prod([g.ravel() for g in gw], axis=0)


def _x_grid(T: int, ref: int, nodes: int):
    pts, wts = zip(*_x_blocks(T, ref, nodes))
    return np.concatenate(pts), np.concatenate(wts)


def truth_oracle(config: DgpConfig, nodes: int = GL_NODES, bounds: bool = True) -> TruthRecord:
    """Population effect and sharp bounds by quadrature.

    DGPs 4 and 5 are misspecified for the logit model; their effect equals
    DGP1's ``b0 / 4`` by construction and is returned in closed form. With
    ``bounds=False`` the sharp bounds are not integrated and are reported as
    NaN (the effect itself is still exact or by quadrature).
    """
    b = config.beta0
    if config.dgp in (4, 5):
        return TruthRecord(0.25 * b, 0.25 * b, 0.25 * b, "closed-form")
    if config.T_values is not None:
        if config.dgp == 1:
            return TruthRecord(0.25 * b, 0.25 * b, 0.25 * b, "closed-form")
        raise ValidationError("population bounds for varying T are only available for DGP1")
    T, ref = config.T, config.ref
    lower = upper = 0.0
    delta = 0.0
    need_grid = bounds or config.dgp == 3
    for x, w in (_x_blocks(T, ref, nodes) if need_grid else ()):
        if bounds:
            h = population_bounds(x[:, :, None], true_gamma(config, x), np.array([b]), "ame", ref)
            lower += w @ h[:, 0]
            upper += w @ h[:, 1]
        if config.dgp == 3:
            nodes_eta, wts = _eta_law(config, x)
            u = expit(nodes_eta)
            delta += b * float(w @ np.sum(wts * u * (1 - u), axis=1))
    if config.dgp == 1:
        delta = 0.25 * b
    elif config.dgp == 2:
        z, wz = hermegauss(GH_NODES)
        lam = expit(z)
        delta = b * float((wz / np.sqrt(2 * np.pi)) @ (lam * (1 - lam)))
    if not bounds:
        return TruthRecord(float(delta), float("nan"), float("nan"), "quadrature")
    lo, hi = float(min(lower, upper)), float(max(lower, upper))
    # quadrature noise can put a point-identified truth a hair outside
    lo, hi = min(lo, delta), max(hi, delta)
    return TruthRecord(float(delta), lo, hi, "quadrature")


# ---------------------------------------------------------------------------
# Linear probability model


@dataclass(frozen=True)
class LpmResult:
    slope: float
    clustered_se: float
    ci: ConfidenceInterval
    coef: np.ndarray = field(repr=False)


def lpm_estimate(data: PanelDataset, k: int | None = None, alpha: float = 0.05) -> LpmResult:
    """Within (fixed-effects) OLS with unit-clustered standard errors.

    The small-sample factor is ``G/(G-1) * (N-1)/(N-K)`` with G units, N
    person-periods and K slopes.
    """
    k = data.effect_index if k is None else k
    live = np.arange(data.y.shape[1])[None, :] < data.T[:, None]
    cnt = data.T.astype(float)
    ybar = (data.y * live).sum(axis=1) / cnt
    xbar = (data.x * live[:, :, None]).sum(axis=1) / cnt[:, None]
    yd = (data.y - ybar[:, None])[live]
    xd = (data.x - xbar[:, None, :])[live]
    unit = np.repeat(np.arange(data.n), data.T)
    XtX = xd.T @ xd
    if np.linalg.matrix_rank(XtX) < data.p:
        raise IdentificationError("no within-unit variation in the covariates")
    XtX_inv = np.linalg.inv(XtX)
    coef = XtX_inv @ (xd.T @ yd)
    resid = yd - xd @ coef
    scores = np.zeros((data.n, data.p))
    np.add.at(scores, unit, xd * resid[:, None])
    G, N, K = data.n, xd.shape[0], data.p
    factor = G / (G - 1) * (N - 1) / (N - K) if G > 1 and N > K else 1.0
    V = factor * XtX_inv @ (scores.T @ scores) @ XtX_inv
    se = float(np.sqrt(V[k, k]))
    z = norm.ppf(1 - alpha / 2)
    ci = ConfidenceInterval(coef[k] - z * se, coef[k] + z * se, 1 - alpha, "LPM")
    return LpmResult(float(coef[k]), se, ci, coef)


# ---------------------------------------------------------------------------
# Two-period treatment design with non-parallel trends


def appendix_a_values() -> dict[str, float]:
    """Population effects of the two-period design below, in closed form.

    ``Y_t = 1{alpha + 1{t=2} + D_t + eps_t >= 0}``, ``D_1 = 0``,
    ``P(D_2 = 1) = 1/2``, ``alpha = -1/2 + 3/2 D_2``.
    """
    L = expit
    ate = 0.5 * (L(3.0) - L(2.0)) + 0.5 * (L(1.5) - L(0.5))
    did = (L(3.0) - L(1.0)) - (L(0.5) - L(-0.5))
    att = L(3.0) - L(2.0)
    atu = L(1.5) - L(0.5)
    return {"ate": float(ate), "att": float(att), "atu": float(atu), "did": float(did)}


def generate_did(n: int, seed: int = 0) -> PanelDataset:
    """Draw the two-period design; covariates are a period-2 dummy and D."""
    rng = rep_rng(seed, 0)
    d2 = (rng.uniform(size=n) < 0.5).astype(float)
    alpha = -0.5 + 1.5 * d2
    time = np.array([0.0, 1.0])
    d = np.stack([np.zeros(n), d2], axis=1)
    eps = rng.logistic(size=(n, 2))
    y = (alpha[:, None] + time[None, :] + d + eps >= 0).astype(float)
    x = np.stack([np.broadcast_to(time, (n, 2)), d], axis=2)
    return PanelDataset(y, x, covariates=["period2", "treat"], effect_index=1)


# ---------------------------------------------------------------------------
# Replication harness

METHODS = ("bounds", "chebyshev", "lpm")


def _one_rep(args):
    config, rep, methods, alpha, proj = args
    data = generate(config, rep)
    out = {}
    try:
        fit = fit_cmle(data)
        if "chebyshev" in methods:
            est = estimate_simple(data, fit)
            out["chebyshev"] = (est.delta_hat, ci2(est, alpha=alpha), ci3(est, fit, 0.2 * alpha, 0.8 * alpha))
        if "bounds" in methods:
            b = estimate_bounds(data, fit, proj=proj, check=False)
            out["bounds"] = (b.lower, b.upper, ci1(b, fit, alpha))
        if "lpm" in methods:
            out["lpm"] = lpm_estimate(data, alpha=alpha)
    except (FelogitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"
    return rep, out, None


def _default_threads() -> int:
    env = os.environ.get("FELOGIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_study(config: DgpConfig, methods=METHODS, out=None, threads: int | None = None,
              alpha: float = 0.05, proj: ProjectionConfig | None = None, max_fail: float = 0.05):
    """Replicate estimation on fresh draws and summarise.

    Returns a list of rows ``(dgp, T, n, method, stat, value)``; ``out``
    receives the same rows as CSV. Reps that fail numerically are dropped and
    counted under ``method="all", stat="failures"``; more than ``max_fail`` of
    them aborts with :class:`EstimationError`.
    """
    requested = set(methods)
    methods = tuple(m for m in METHODS if m in requested)
    if requested - set(METHODS) or not methods:
        raise ValidationError(f"methods must be a nonempty subset of {METHODS}")
    truth = truth_oracle(config, bounds="bounds" in methods)
    threads = _default_threads() if threads is None else max(1, int(threads))
    jobs = [(config, r, methods, alpha, proj) for r in range(config.reps)]
    if threads > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one_rep, jobs))
    else:
        results = [_one_rep(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    ok = [r[1] for r in results if r[1] is not None]
    failures = len(results) - len(ok)
    if failures > max_fail * config.reps:
        msgs = sorted({r[2] for r in results if r[2]})
        raise EstimationError(f"{failures} of {config.reps} replications failed: {msgs[:3]}")
    rows = []
    key = (config.dgp, config.T, config.n)

    def add(method, stat, value):
        rows.append(key + (method, stat, float(value)))

    def summary(method, name, vals, target):
        vals = np.asarray(vals, float)
        add(method, f"bias{name}", vals.mean() - target)
        add(method, f"sd{name}", vals.std(ddof=1) if vals.size > 1 else 0.0)

    def cover(method, name, cis, target):
        add(method, f"{name}_coverage", np.mean([c.contains(target) for c in cis]))
        add(method, f"{name}_length", np.mean([c.length for c in cis]))

    if ok:
        if "bounds" in methods:
            summary("bounds", "_lower", [o["bounds"][0] for o in ok], truth.lower)
            summary("bounds", "_upper", [o["bounds"][1] for o in ok], truth.upper)
            cover("bounds", "ci1", [o["bounds"][2] for o in ok], truth.delta)
        if "chebyshev" in methods:
            summary("chebyshev", "", [o["chebyshev"][0] for o in ok], truth.delta)
            cover("chebyshev", "ci2", [o["chebyshev"][1] for o in ok], truth.delta)
            cover("chebyshev", "ci3", [o["chebyshev"][2] for o in ok], truth.delta)
        if "lpm" in methods:
            summary("lpm", "", [o["lpm"].slope for o in ok], truth.delta)
            cover("lpm", "ci", [o["lpm"].ci for o in ok], truth.delta)
    add("all", "failures", failures)
    add("all", "reps", len(ok))
    if out is not None:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["dgp", "T", "n", "method", "stat", "value"])
        for r in rows:
            wr.writerow(list(r[:5]) + [repr(r[5])])
        _atomic_write_text(out, buf.getvalue())
    return rows
