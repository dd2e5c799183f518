"""Panel data container, CSV ingestion and the slope rank condition."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import SchemaError, ValidationError


@dataclass(frozen=True)
class PanelUnit:
    """One individual: binary outcomes ``y`` and covariates ``x`` over T_i periods."""

    id: object
    y: np.ndarray
    x: np.ndarray

    @property
    def T(self) -> int:
        return int(self.y.shape[0])

    @property
    def s(self) -> int:
        return int(self.y.sum())


class PanelDataset:
    """Array-backed panel of binary outcomes.

    Units may have different numbers of periods. Arrays are padded to the
    longest panel: ``y`` has shape ``(n, T_max)`` and ``x`` has shape
    ``(n, T_max, p)``; entries past ``T[i]`` are zero and never read.

    Parameters
    ----------
    y : array_like, shape (n, T_max)
    x : array_like, shape (n, T_max, p) or (n, T_max) when p = 1
    T : array_like of int, optional
        Periods per unit. Defaults to ``T_max`` for every unit.
    ids : sequence, optional
        Unit labels, unique. Defaults to ``0..n-1``.
    covariates : sequence of str, optional
        Covariate names, defaults to ``x1..xp``.
    effect_index : int
        0-based index of the covariate whose effect is targeted.
    periods : sequence of arrays, optional
        Original period labels per unit, kept for reporting only.
    """

    def __init__(
        self,
        y,
        x,
        T=None,
        ids: Sequence | None = None,
        covariates: Sequence[str] | None = None,
        effect_index: int = 0,
        periods: Sequence | None = None,
    ):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if y.ndim != 2:
            raise ValidationError("y must have shape (n, T)")
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[:2] != y.shape:
            raise ValidationError("x must have shape (n, T, p) matching y")
        n, tmax = y.shape
        T = np.full(n, tmax, dtype=int) if T is None else np.asarray(T, dtype=int)
        if T.shape != (n,):
            raise ValidationError("T must have one entry per unit")
        if n and (T.min() < 2 or T.max() > tmax):
            raise ValidationError("every unit needs at least two periods")
        valid = np.arange(tmax)[None, :] < T[:, None]
        yv = y[valid]
        if not np.all((yv == 0) | (yv == 1)):
            raise ValidationError("outcomes must be 0 or 1")
        if not np.all(np.isfinite(x[valid])):
            raise ValidationError("covariates must be finite")
        y = np.where(valid, y, 0.0)
        x = np.where(valid[:, :, None], x, 0.0)
        ids = list(range(n)) if ids is None else list(ids)
        if len(ids) != n:
            raise ValidationError("ids must have one entry per unit")
        if len(set(ids)) != n:
            raise ValidationError("unit identifiers must be unique")
        p = x.shape[2]
        covariates = [f"x{j + 1}" for j in range(p)] if covariates is None else list(covariates)
        if len(covariates) != p:
            raise ValidationError("one name per covariate is required")
        if not 0 <= effect_index < p:
            raise ValidationError(f"effect index {effect_index} out of range for p={p}")
        for arr in (y, x, T):
            arr.setflags(write=False)
        self.y, self.x, self.T = y, x, T
        self.ids = ids
        self.covariates = covariates
        self.effect_index = int(effect_index)
        self.periods = periods
        s = y.sum(axis=1).astype(int)
        s.setflags(write=False)
        self.s = s

    # basic shape information
    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[2]

    @property
    def balanced(self) -> bool:
        return bool(np.all(self.T == self.y.shape[1]))

    @property
    def stayer_share(self) -> float:
        """Share of units whose covariates never change over time."""
        if self.n == 0:
            return 0.0
        stay = [np.ptp(self.x[i, : self.T[i]], axis=0).max() == 0 for i in range(self.n)]
        return float(np.mean(stay))

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        Ts = np.unique(self.T).tolist()
        return f"PanelDataset(n={self.n}, T={Ts}, p={self.p}, effect={self.covariates[self.effect_index]!r})"

    def unit(self, i: int) -> PanelUnit:
        t = self.T[i]
        return PanelUnit(self.ids[i], self.y[i, :t].copy(), self.x[i, :t].copy())

    @property
    def units(self) -> Iterator[PanelUnit]:
        return (self.unit(i) for i in range(self.n))

    def subset(self, index) -> "PanelDataset":
        """Units selected by a boolean mask or an integer index array."""
        idx = np.arange(self.n)[np.asarray(index)]
        tmax = int(self.T[idx].max()) if idx.size else self.y.shape[1]
        return PanelDataset(
            self.y[idx, :tmax],
            self.x[idx, :tmax],
            T=self.T[idx],
            ids=[self.ids[i] for i in idx],
            covariates=self.covariates,
            effect_index=self.effect_index,
            periods=None if self.periods is None else [self.periods[i] for i in idx],
        )

    def with_effect(self, effect: int | str) -> "PanelDataset":
        k = self.covariates.index(effect) if isinstance(effect, str) else int(effect)
        return PanelDataset(self.y, self.x, self.T, self.ids, self.covariates, k, self.periods)

    def balanced_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(y, x)`` for a balanced panel; raises otherwise."""
        if not self.balanced:
            raise ValidationError("operation requires a balanced panel; stratify by T first")
        return self.y, self.x

    def strata(self) -> list[tuple[int, np.ndarray]]:
        """``(T, unit indices)`` for each distinct panel length."""
        return [(int(t), np.flatnonzero(self.T == t)) for t in np.unique(self.T)]


# ---------------------------------------------------------------------------
# CSV input/output

DEFAULT_SCHEMA = {"id": "id", "period": "t", "outcome": "y", "covariates": None}


def load_panel(path, schema: dict | None = None, effect: int | str = 0) -> PanelDataset:
    """Read a long-format CSV (one row per unit and period).

    Parameters
    ----------
    path : path-like
    schema : dict, optional
        Column names under keys ``id``, ``period``, ``outcome`` and
        ``covariates`` (a list). By default ``id,t,y`` and every other column
        as a covariate, in file order.
    effect : int or str
        Targeted covariate, by 0-based index or by name.

    Raises
    ------
    SchemaError
        A required column is missing.
    ValidationError
        Missing fields, non-binary outcomes, duplicated (id, period) pairs,
        non-integer periods or units with fewer than two periods.
    """
    sch = dict(DEFAULT_SCHEMA)
    sch.update(schema or {})
    df = pd.read_csv(path, dtype={sch["id"]: str}, keep_default_na=True, float_precision="round_trip")
    for key in ("id", "period", "outcome"):
        if sch[key] not in df.columns:
            raise SchemaError(f"missing column {sch[key]!r}")
    covs = sch["covariates"]
    if covs is None:
        covs = [c for c in df.columns if c not in (sch["id"], sch["period"], sch["outcome"])]
    missing = [c for c in covs if c not in df.columns]
    if missing:
        raise SchemaError(f"missing covariate column(s) {missing}")
    if not covs:
        raise SchemaError("no covariate columns")
    cols = [sch["id"], sch["period"], sch["outcome"], *covs]
    na = df[cols].isna().any(axis=1).to_numpy()
    if na.any():
        r = int(np.flatnonzero(na)[0])
        raise ValidationError(f"row {r} (line {r + 2}) has a missing field")
    yv = pd.to_numeric(df[sch["outcome"]], errors="coerce").to_numpy()
    bad = ~np.isin(yv, (0.0, 1.0))
    if bad.any():
        r = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"row {r} (line {r + 2}) has non-binary outcome {df[sch['outcome']].iloc[r]!r}")
    per = pd.to_numeric(df[sch["period"]], errors="coerce").to_numpy()
    badp = ~np.isfinite(per) | (per != np.round(per))
    if badp.any():
        r = int(np.flatnonzero(badp)[0])
        raise ValidationError(f"row {r} (line {r + 2}) has a non-integer period")
    xv = df[covs].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    badx = ~np.isfinite(xv).all(axis=1)
    if badx.any():
        r = int(np.flatnonzero(badx)[0])
        raise ValidationError(f"row {r} (line {r + 2}) has a non-numeric covariate")
    dup = df.duplicated(subset=[sch["id"], sch["period"]], keep="first").to_numpy()
    if dup.any():
        r = int(np.flatnonzero(dup)[0])
        raise ValidationError(f"row {r} (line {r + 2}) duplicates (id, period)")

    ids = df[sch["id"]].to_numpy()
    order = np.lexsort((per, ids))
    uid, start, counts = np.unique(ids[order], return_index=True, return_counts=True)
    # keep first-appearance order of ids
    first_seen = pd.unique(ids)
    pos = {u: i for i, u in enumerate(uid)}
    n, tmax, p = len(uid), int(counts.max()) if len(uid) else 0, len(covs)
    if n and counts.min() < 2:
        bad_id = uid[np.argmin(counts)]
        raise ValidationError(f"unit {bad_id!r} has fewer than two periods")
    y = np.zeros((n, tmax))
    x = np.zeros((n, tmax, p))
    T = np.zeros(n, dtype=int)
    periods = []
    for i, u in enumerate(first_seen):
        j = pos[u]
        rows = order[start[j] : start[j] + counts[j]]
        T[i] = counts[j]
        y[i, : T[i]] = yv[rows]
        x[i, : T[i]] = xv[rows]
        periods.append(per[rows].astype(int))
    data = PanelDataset(y, x, T=T, ids=list(first_seen), covariates=covs, periods=periods)
    return data.with_effect(effect)


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_panel(data: PanelDataset, path) -> None:
    """Write ``data`` as long-format CSV with round-trip float precision."""
    lines = [",".join(["id", "t", "y", *data.covariates])]
    for i in range(data.n):
        per = data.periods[i] if data.periods is not None else np.arange(1, data.T[i] + 1)
        for t in range(data.T[i]):
            xs = ",".join(repr(float(v)) for v in data.x[i, t])
            lines.append(f"{data.ids[i]},{int(per[t])},{int(data.y[i, t])},{xs}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Rank condition


@dataclass(frozen=True)
class RankCheck:
    matrix: np.ndarray
    nonsingular: bool
    min_eigenvalue: float


def within_variation_matrix(data: PanelDataset) -> np.ndarray:
    """``(1/n) sum_i sum_{t,t'} (X_it - X_it')(X_it - X_it')'``.

    Uses ``sum_{t,t'} (x_t - x_t')(x_t - x_t')' = 2 T sum_t (x_t - xbar)(x_t - xbar)'``.
    """
    if data.n == 0:
        raise ValidationError("empty dataset")
    out = np.zeros((data.p, data.p))
    for T, idx in data.strata():
        x = data.x[idx, :T]
        xc = x - x.mean(axis=1, keepdims=True)
        out += 2.0 * T * np.einsum("ntj,ntk->jk", xc, xc)
    return out / data.n


def check_rank_condition(data: PanelDataset, rtol: float = 1e-10) -> RankCheck:
    """Sample analogue of the rank condition identifying the slope.

    The flag is true when the smallest eigenvalue exceeds ``rtol`` times the
    larger of the top eigenvalue and the covariates' raw second moment, so
    rounding noise in time-constant covariates does not count as variation.
    """
    mat = within_variation_matrix(data)
    eig = np.linalg.eigvalsh(mat)
    lo, hi = float(eig[0]), float(eig[-1])
    scale = max(hi, float(np.mean(data.x**2)) * np.mean(data.T))
    return RankCheck(mat, bool(hi > 0 and lo > rtol * scale), lo)
