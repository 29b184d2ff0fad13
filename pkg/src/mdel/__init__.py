"""Cross-fitted empirical likelihood estimation of average treatment effects.

The main entry points are :func:`run_estimators` for a single trial and
:func:`monte_carlo_run` for simulation studies; the ``mdel`` command wraps
both.
"""

from .core import (
    ConstraintMatrix,
    DatasetError,
    ELSolution,
    EstimateReport,
    FoldPlan,
    NuisancePredictions,
    TrialDataset,
    make_fold_plan,
    validate_dataset,
)
from .el import ELInfeasibleError, center_constraints, el_weights, feasibility_check, solve_el_dual
from .estimators import (
    MDELFit,
    VarianceError,
    diff_in_means,
    mdel_estimate,
    mdel_report,
    mdel_variance,
    nosplit_el,
    wald_ci,
    wdtt_estimate,
)
from .nuisance import (
    NuisanceModelSpec,
    fit_lasso,
    fit_nuisances_crossfit,
    fit_nuisances_full,
    fit_random_forest,
    fit_scad,
    predict,
)
from .pipeline import default_estimators, parse_estimator, run_estimators
from .screening import ScreenResult, sis_screen
from .simulation import MetricsRow, SimulationSpec, dgp_generate, monte_carlo_run, true_theta

__version__ = "0.1.0"

__all__ = [
    "ConstraintMatrix",
    "DatasetError",
    "ELInfeasibleError",
    "ELSolution",
    "EstimateReport",
    "FoldPlan",
    "MDELFit",
    "MetricsRow",
    "NuisanceModelSpec",
    "NuisancePredictions",
    "ScreenResult",
    "SimulationSpec",
    "TrialDataset",
    "VarianceError",
    "center_constraints",
    "default_estimators",
    "dgp_generate",
    "diff_in_means",
    "el_weights",
    "feasibility_check",
    "fit_lasso",
    "fit_nuisances_crossfit",
    "fit_nuisances_full",
    "fit_random_forest",
    "fit_scad",
    "make_fold_plan",
    "mdel_estimate",
    "mdel_report",
    "mdel_variance",
    "monte_carlo_run",
    "nosplit_el",
    "parse_estimator",
    "predict",
    "run_estimators",
    "sis_screen",
    "solve_el_dual",
    "true_theta",
    "validate_dataset",
    "wald_ci",
    "wdtt_estimate",
]
