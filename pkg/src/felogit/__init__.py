"""Average marginal and treatment effects in fixed-effects panel logit models.

Two estimators are provided: plug-in estimates of the sharp identified bounds
(:func:`estimate_bounds`) and a Chebyshev-approximation point estimate with a
bias bound (:func:`estimate_simple`).
"""

__version__ = "0.1.0"

from .bounds import (
    BoundsEstimate,
    ConfidenceInterval,
    ProjectionConfig,
    c_from_gamma,
    ci1,
    estimate_bounds,
    lambda_coeffs,
)
from .chebyshev import SimpleEstimate, ci2, ci3, estimate_simple, folded_normal_quantile, p_term
from .cmle import CmleFit, cond_loglik, fit_cmle, symmetric_sums
from .errors import (
    DivergenceError,
    EstimationError,
    FelogitError,
    IdentificationError,
    NonConvergenceError,
    NumericError,
    SchemaError,
    ValidationError,
)
from .extensions import asf_bounds, ate_bounds, stratify_by_T
from .localpoly import GammaEstimate, OracleGamma, bandwidth_rule, fit_gamma, local_poly_fit
from .moments import (
    ChebyshevApprox,
    MomentVector,
    chebyshev_pstar,
    extremal_moments,
    hankel_determinants,
    is_member,
    lp_oracle_extremal,
    project_moments,
)
from .panel import PanelDataset, PanelUnit, check_rank_condition, load_panel, write_panel
from .targets import EffectTarget

__all__ = [
    "BoundsEstimate",
    "ChebyshevApprox",
    "CmleFit",
    "ConfidenceInterval",
    "DivergenceError",
    "EffectTarget",
    "EstimationError",
    "FelogitError",
    "GammaEstimate",
    "IdentificationError",
    "MomentVector",
    "NonConvergenceError",
    "NumericError",
    "OracleGamma",
    "PanelDataset",
    "PanelUnit",
    "ProjectionConfig",
    "SchemaError",
    "SimpleEstimate",
    "ValidationError",
    "asf_bounds",
    "ate_bounds",
    "bandwidth_rule",
    "c_from_gamma",
    "chebyshev_pstar",
    "check_rank_condition",
    "ci1",
    "ci2",
    "ci3",
    "cond_loglik",
    "estimate_bounds",
    "estimate_simple",
    "extremal_moments",
    "fit_cmle",
    "fit_gamma",
    "folded_normal_quantile",
    "hankel_determinants",
    "is_member",
    "lambda_coeffs",
    "load_panel",
    "local_poly_fit",
    "lp_oracle_extremal",
    "p_term",
    "project_moments",
    "stratify_by_T",
    "symmetric_sums",
    "write_panel",
]
