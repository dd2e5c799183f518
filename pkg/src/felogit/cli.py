"""Command-line interface.

Exit codes: 0 on success, 1 for invalid input or usage, 2 for numerical
failures. Results go to standard output or ``--out`` (written atomically);
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import __version__
from .bounds import ProjectionConfig, ci1, estimate_bounds
from .chebyshev import ci2, ci3, estimate_simple
from .cmle import fit_cmle
from .errors import FelogitError, ValidationError
from .moments import MomentDomainError, extremal_moments, hankel_determinants, project_moments
from .panel import _atomic_write_text, load_panel
from .targets import EffectTarget

log = logging.getLogger("felogit")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _level(text: str) -> float:
    v = float(text)
    if not 0.5 < v < 1:
        raise argparse.ArgumentTypeError("level must lie in (0.5, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="felogit", description="Average effects in fixed-effects panel logit models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap for simulations (default: FELOGIT_THREADS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="estimate an average effect from a long-format CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--effect", default=None, help="covariate name or 0-based index (default: first)")
    f.add_argument("--id-col", default="id")
    f.add_argument("--period-col", default="t")
    f.add_argument("--outcome-col", default="y")
    f.add_argument("--covariates", default=None, help="comma-separated covariate columns")
    f.add_argument("--method", choices=("bounds", "chebyshev"), default="chebyshev")
    f.add_argument("--ci", type=int, choices=(1, 2, 3), default=None)
    f.add_argument("--level", type=_level, default=0.95)
    f.add_argument("--target", choices=("ame", "att", "atu", "ate", "asf"), default="ame")
    f.add_argument("--x0", type=_floats, default=None)
    f.add_argument("--gamma", type=float, default=None, help="CI3 level split for the slope")
    f.add_argument("--delta", type=float, default=None, help="CI3 level split for the estimate")
    f.add_argument("--bandwidth", type=float, default=None)
    f.add_argument("--ell", type=int, default=1)
    f.add_argument("--projection", choices=("variance", "constant", "none"), default="variance")
    f.add_argument("--c-n", type=float, default=None)
    f.add_argument("--dump-weights", default=None, help="CSV of per-unit bound terms (bounds method)")
    f.add_argument("--out", default=None)

    m = sub.add_parser("moments", help="moment-space utilities")
    msub = m.add_subparsers(dest="moments_command", required=True, parser_class=_Parser)
    q = msub.add_parser("qbounds", help="extremal next moments of a moment vector")
    q.add_argument("--m", type=_floats, required=True)
    q.add_argument("--out", default=None)
    pr = msub.add_parser("project", help="project an estimated moment vector")
    pr.add_argument("--m", type=_floats, required=True)
    pr.add_argument("--n", type=int, required=True)
    pr.add_argument("--c-n", type=float, default=None)
    pr.add_argument("--out", default=None)

    s = sub.add_parser("simulate", help="replicate estimators on a simulation design")
    s.add_argument("--dgp", type=int, choices=(1, 2, 3, 4, 5), default=1)
    s.add_argument("--T", type=int, default=2)
    s.add_argument("--T-values", type=_floats, default=None, help="varying T, e.g. 2,3")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--methods", default="bounds,chebyshev,lpm")
    s.add_argument("--level", type=_level, default=0.95)
    s.add_argument("--threads", dest="sim_threads", type=int, default=None, help="same as the global flag")
    s.add_argument("--out", default=None)
    return p


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        _atomic_write_text(out, text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _ci_dict(ci) -> dict:
    return {"lo": ci.lo, "hi": ci.hi, "level": ci.level, "method": ci.method}


def _cmd_fit(a) -> None:
    covs = a.covariates.split(",") if a.covariates else None
    schema = {"id": a.id_col, "period": a.period_col, "outcome": a.outcome_col, "covariates": covs}
    effect: int | str = 0
    if a.effect is not None:
        effect = int(a.effect) if a.effect.isdigit() else a.effect
    data = load_panel(a.input, schema, effect=effect)
    if a.target == "asf" and a.x0 is None:
        raise ValidationError("--target asf needs --x0")
    target = EffectTarget(a.target, x0=tuple(a.x0) if a.x0 else None)
    alpha = 1 - a.level
    ci_choice = a.ci or (1 if a.method == "bounds" else 2)
    if (a.method == "bounds") != (ci_choice == 1):
        raise ValidationError("the bounds method pairs with --ci 1, the chebyshev method with --ci 2 or 3")
    if (a.gamma is None) != (a.delta is None):
        raise ValidationError("--gamma and --delta go together")
    fit = fit_cmle(data)
    log.info("CMLE converged in %d iterations", fit.iterations)
    k = data.effect_index
    base = {"method": a.method, "target": target.kind, "effect": data.covariates[k], "n": data.n,
            "beta": fit.beta_hat.tolist(), "beta_se": fit.se.tolist(),
            "convergence": {"converged": bool(fit.converged), "iterations": int(fit.iterations),
                            "gradient_norm": float(fit.gradient_norm), "loglik": float(fit.loglik)}}
    if a.method == "bounds":
        proj = ProjectionConfig(a.projection, a.c_n)
        est = estimate_bounds(data, fit, proj=proj, target=target, ell=a.ell, bandwidth=a.bandwidth)
        ci = ci1(est, fit, alpha, k)
        diag = {k_: v for k_, v in est.diagnostics.items() if isinstance(v, (int, float, dict))}
        res = dict(base, lower=est.lower, upper=est.upper, sigma=est.sigma.tolist(), ci=_ci_dict(ci),
                   diagnostics=diag)
        if a.dump_weights:
            rows = ["id,psi_lower,psi_upper"]
            rows += [f"{i},{pl!r},{pu!r}" for i, (pl, pu) in zip(data.ids, est.psi.tolist())]
            _atomic_write_text(a.dump_weights, "\n".join(rows) + "\n")
    else:
        est = estimate_simple(data, fit, target)
        if ci_choice == 3:
            g = 0.2 * alpha if a.gamma is None else a.gamma
            d = 0.8 * alpha if a.delta is None else a.delta
            if not np.isclose(g + d, alpha):
                raise ValidationError("--gamma plus --delta must equal 1 - level")
            ci = ci3(est, fit, g, d, k)
        else:
            ci = ci2(est, alpha=alpha)
        res = dict(base, delta_hat=est.delta_hat, sigma_hat=est.sigma_hat, bbar_hat=est.bbar_hat,
                   ci=_ci_dict(ci))
    _emit(_json(res), a.out)


def _cmd_moments(a) -> None:
    m = np.asarray(a.m, dtype=float)
    if m.size < 2:
        raise ValidationError("give at least m_0 and m_1")
    try:
        if a.moments_command == "qbounds":
            diag = hankel_determinants(m)
            if not diag.member:
                raise ValidationError("m is not a moment vector of a distribution on [0, 1]")
            ex = extremal_moments(m)
            res = {"q_lower": float(ex.q_lower), "q_upper": float(ex.q_upper), "boundary": bool(ex.boundary),
                   "diagnostics": {"lower_dets": diag.lower_dets.tolist(), "upper_dets": diag.upper_dets.tolist(),
                                   "first_boundary": diag.first_boundary, "boundary_kind": diag.boundary_kind}}
        else:
            pr = project_moments(m, a.n, c_n=a.c_n, rule="constant")
            res = {"m_hat": pr.m_hat.tolist(), "I_hat": int(pr.I_hat)}
    except MomentDomainError as exc:
        raise ValidationError(str(exc)) from exc
    _emit(_json(res), a.out)


def _cmd_simulate(a, threads) -> None:
    from .montecarlo import DgpConfig, run_study

    tv = tuple(int(v) for v in a.T_values) if a.T_values else None
    cfg = DgpConfig(a.dgp, a.T, a.n, a.beta, a.seed, a.reps, tv)
    methods = [m.strip() for m in a.methods.split(",") if m.strip()]
    rows = run_study(cfg, methods, out=a.out, threads=threads, alpha=1 - a.level)
    if a.out is None:
        lines = ["dgp,T,n,method,stat,value"] + [",".join(map(str, r[:5])) + f",{r[5]!r}" for r in rows]
        _emit("\n".join(lines) + "\n", None)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="felogit: %(message)s", stream=sys.stderr)
    threads = getattr(a, "sim_threads", None) or a.threads
    if threads is None and os.environ.get("FELOGIT_THREADS"):
        threads = int(os.environ["FELOGIT_THREADS"])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if a.command == "fit":
                _cmd_fit(a)
            elif a.command == "moments":
                _cmd_moments(a)
            else:
                _cmd_simulate(a, threads)
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"felogit: error: {exc}", file=sys.stderr)
        return 1
    except (FelogitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"felogit: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
