"""Outcome regressions for each arm: Lasso, SCAD and random forests."""

from .crossfit import fit, fit_nuisances_crossfit, fit_nuisances_full, predict
from .forest import ForestFit, fit_random_forest
from .linear import LinearFit, fit_lasso, fit_scad, lambda_grid
from .models import NuisanceModelSpec, spec_for

__all__ = [
    "ForestFit",
    "LinearFit",
    "NuisanceModelSpec",
    "fit",
    "fit_lasso",
    "fit_nuisances_crossfit",
    "fit_nuisances_full",
    "fit_random_forest",
    "fit_scad",
    "lambda_grid",
    "predict",
    "spec_for",
]
