from __future__ import annotations

import numpy as np

from ..core import FoldPlan, NuisancePredictions, TrialDataset
from .forest import ForestFit, fit_random_forest
from .linear import LinearFit, fit_lasso, fit_scad
from .models import NuisanceModelSpec

__all__ = ["fit", "predict", "fit_nuisances_crossfit", "fit_nuisances_full"]

_FITTERS = {"lasso": fit_lasso, "scad": fit_scad, "random_forest": fit_random_forest}


def fit(x, y, spec: NuisanceModelSpec) -> LinearFit | ForestFit:
    return _FITTERS[spec.kind](x, y, spec)


def predict(model: LinearFit | ForestFit, x_query) -> np.ndarray:
    return model.predict(x_query)


def _derived_seed(base: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(base), *keys]).generate_state(1)[0])


def _screened_fit(x, y, spec, screen):
    # Optional marginal-correlation screen on the training rows only.
    if screen is None or screen >= x.shape[1]:
        return fit(x, y, spec), None
    from ..screening import marginal_scores, top_columns

    cols = top_columns(marginal_scores(x, y), screen)
    return fit(x[:, cols], y, spec), cols


def fit_nuisances_crossfit(dataset: TrialDataset, plan: FoldPlan,
                           specs: list[NuisanceModelSpec],
                           screen_within: int | None = None) -> NuisancePredictions:
    """Cross-fitted arm regressions.

    For every arm ``d``, fold ``k`` and model ``j`` the model is trained on the
    arm-``d`` units outside fold ``k`` and predicts every unit in fold ``k``,
    whichever arm it belongs to. Seeds are derived from ``(spec.seed, d, k)``
    so a fit never depends on evaluation order.

    ``screen_within`` screens covariates inside each training complement
    instead of on the full sample.
    """
    if not specs:
        raise ValueError("need at least one nuisance model spec")
    n = dataset.n
    out = {d: np.empty((n, len(specs))) for d in (0, 1)}
    for d in (0, 1):
        for k in range(plan.k):
            train = plan.complement_arm(dataset, k, d)
            target = plan.fold(k)
            xtr = dataset.x[train]
            ytr = dataset.y[train]
            if train.size < 3:
                # with nothing to regress on, every learner returns the mean
                if train.size == 0 or np.ptp(xtr, axis=0).max(initial=0.0) > 0:
                    raise ValueError(
                        f"fold too large for nuisance fitting: arm {d}, fold {k + 1} "
                        f"leaves {train.size} training units"
                    )
                out[d][target, :] = ytr.mean()
                continue
            for j, spec in enumerate(specs):
                s = spec.with_seed(_derived_seed(spec.seed, d, k))
                model, cols = _screened_fit(xtr, ytr, s, screen_within)
                xq = dataset.x[target] if cols is None else dataset.x[np.ix_(target, cols)]
                out[d][target, j] = model.predict(xq)
    return NuisancePredictions(out[1], out[0], tuple(s.name for s in specs))


def fit_nuisances_full(dataset: TrialDataset,
                       specs: list[NuisanceModelSpec]) -> NuisancePredictions:
    """In-sample predictions from one fit per arm on the whole arm (no splitting)."""
    return fit_nuisances_crossfit(dataset, FoldPlan.single(dataset.n), specs)
