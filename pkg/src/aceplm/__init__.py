"""Higher-order orthogonal treatment-effect estimation in the partially linear model.

The package estimates ``theta0`` in ``Y = theta0 * T + f0(X) + xi`` with
``T = g0(X) + eta`` from black-box nuisance estimates of ``g0 = E[T|X]`` and
``q0 = E[Y|X]``.  Besides the usual DML ratio it provides the cumulant-based
ACE estimator of arbitrary order, whose moment function is insensitive to
first-stage errors up to order ``r`` when ``eta`` is non-Gaussian and
independent of ``X``.
"""

from aceplm.cumulants import (
    CumulantSet,
    MomentSequence,
    cubic_estimators,
    cumulants_to_moments,
    debiased_moments,
    moments_to_cumulants,
    raw_moments,
    residual_cumulants,
)
from aceplm.estimators import (
    AceConfig,
    AceEstimate,
    Dataset,
    DegenerateDesignError,
    WeakIdentificationError,
    ace_estimate,
    ace_from_residuals,
    confidence_interval,
    dml_estimate,
    dml_fit,
)
from aceplm.jpoly import (
    JrPolynomial,
    expected_j_derivative,
    identification_value,
    insensitivity_rhs,
    j_closed_form,
    j_derivative,
    j_eval,
    j_eval_batch,
    j_recursive,
)
from aceplm.nuisance import (
    LassoConfig,
    LassoDesign,
    LinearPredictor,
    lambda_default,
    lasso_cv,
    lasso_fit,
    oracle_nuisance,
)
from aceplm.partitions import (
    BlockSizeProfile,
    CapacityError,
    bell_number,
    block_size_profiles,
    partition_weighted_sum,
)

__all__ = [
    "AceConfig",
    "AceEstimate",
    "BlockSizeProfile",
    "CapacityError",
    "CumulantSet",
    "Dataset",
    "DegenerateDesignError",
    "JrPolynomial",
    "LassoConfig",
    "LassoDesign",
    "LinearPredictor",
    "MomentSequence",
    "WeakIdentificationError",
    "ace_estimate",
    "ace_from_residuals",
    "bell_number",
    "block_size_profiles",
    "confidence_interval",
    "cubic_estimators",
    "cumulants_to_moments",
    "debiased_moments",
    "dml_estimate",
    "dml_fit",
    "expected_j_derivative",
    "identification_value",
    "insensitivity_rhs",
    "j_closed_form",
    "j_derivative",
    "j_eval",
    "j_eval_batch",
    "j_recursive",
    "lambda_default",
    "lasso_cv",
    "lasso_fit",
    "moments_to_cumulants",
    "oracle_nuisance",
    "partition_weighted_sum",
    "raw_moments",
    "residual_cumulants",
]

__version__ = "0.1.0"
