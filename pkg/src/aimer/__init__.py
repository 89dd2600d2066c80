"""Marginal-screening eigenvector regression (AIMER) and companions.

The estimator screens columns by marginal correlation with the response,
sketches the full Gram matrix through the screened columns, regresses on
the resulting approximate principal components, and hard-thresholds the
coefficients.  The package also ships the baselines it is compared against
(PCR, SPC, SPC+lasso, ridge, lasso), a latent-factor simulator, a
marginal-screening assumption audit, and a seeded cross-validation harness.
"""

from .errors import (
    AimerError,
    ConvergenceError,
    DimensionError,
    ParseError,
    ValidationError,
)
from .estimators import (
    AimerInternals,
    FitResult,
    fit_aimer,
    fit_lasso,
    fit_pcr,
    fit_ridge,
    fit_spc,
    fit_spc_lasso,
    hard_threshold,
    predict,
)
from .evaluation import (
    CVPlan,
    cross_validate,
    estimation_mse,
    kfold_split,
    orthonormalize_features,
    prediction_mse,
    preprocess_log2_shift,
    roc_curve,
    roc_points,
    train_test_splits,
    transform_response,
)
from .runners import (
    ExperimentReport,
    RealDataProtocol,
    run_real_data,
    run_simulation_suite,
)
from .screening import (
    ExpressionDataset,
    ScreeningPlan,
    center,
    marginal_correlations,
    screen,
    select_count,
    threshold_for_count,
)
from .simulation import (
    FactorBlock,
    LatentFactorConfig,
    SimulatedInstance,
    assumption_fnr,
    build_loadings,
    neighborhood_precision,
    population_beta,
    population_marginal_cov,
    simulate,
    solve_weight_for_zero_marginals,
)
from .sketch import SketchFactorization, SketchSelector, approx_eigvecs, nystrom_approx

__version__ = "0.1.0"
