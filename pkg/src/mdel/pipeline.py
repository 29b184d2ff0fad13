"""Run a named set of estimators on one dataset.

Estimator labels are ``dim``, ``wdtt:<model>``, ``mdel:<model>``,
``mdel:multi`` and ``nosplit_el:<model>`` with ``<model>`` one of
``lasso``, ``scad``, ``rf``.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .core import EstimateReport, FoldPlan, TrialDataset, make_fold_plan
from .el import ELInfeasibleError
from .estimators import VarianceError, diff_in_means, make_report, mdel_report, nosplit_el, wdtt_estimate
from .nuisance import fit_nuisances_crossfit, fit_nuisances_full, spec_for

__all__ = ["MODEL_NAMES", "parse_estimator", "default_estimators", "run_estimators", "failed_report"]

MODEL_NAMES = ("lasso", "scad", "rf")
_MODEL_CODES = {"lasso": 1, "scad": 2, "rf": 3}
METHODS = ("dim", "wdtt", "mdel", "nosplit_el")


def parse_estimator(label: str) -> tuple[str, str]:
    method, _, model = label.partition(":")
    if method not in METHODS:
        raise ValueError(f"unknown estimator {label!r}")
    if method == "dim":
        if model:
            raise ValueError("dim takes no model")
        return method, ""
    allowed = MODEL_NAMES + (("multi",) if method == "mdel" else ())
    if model not in allowed:
        raise ValueError(f"unknown model {model!r} for {method}")
    return method, model


def default_estimators(models=MODEL_NAMES, multi: bool | None = None) -> tuple[str, ...]:
    models = tuple(models)
    out = ["dim"]
    out += [f"wdtt:{m}" for m in models]
    out += [f"mdel:{m}" for m in models]
    if multi if multi is not None else len(models) > 1:
        out.append("mdel:multi")
    return tuple(out)


def _seed(base: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(base), *keys]).generate_state(1)[0])


def failed_report(label: str, dataset: TrialDataset, k: int, message: str) -> EstimateReport:
    method, model = parse_estimator(label)
    return make_report(method, math.nan, math.nan, dataset, k,
                       (model,) if model else (), (message,))


def run_estimators(dataset: TrialDataset, estimators, k: int = 5, seed: int = 0,
                   multi_models=MODEL_NAMES, screen_within: int | None = None,
                   spec_overrides: dict[str, dict] | None = None) -> list[EstimateReport]:
    """Fit the needed nuisances once and return one report per estimator label.

    Estimator failures (an infeasible EL dual, an unusable fold plan) do not
    abort the run; they produce a report with NaN estimate and the error text
    in ``warnings``.
    """
    parsed = [(lab, *parse_estimator(lab)) for lab in estimators]
    overrides = spec_overrides or {}

    def spec(name):
        return spec_for(name, seed=_seed(seed, 1, _MODEL_CODES[name]), **overrides.get(name, {}))

    split_models: list[str] = []
    full_models: list[str] = []
    for _, method, model in parsed:
        targets = list(multi_models) if model == "multi" else [model] if model else []
        bucket = full_models if method == "nosplit_el" else split_models if method != "dim" else []
        for m in targets:
            if m not in bucket:
                bucket.append(m)

    plan: FoldPlan | None = None
    split_preds = full_preds = None
    split_error = full_error = None
    if split_models:
        try:
            plan = make_fold_plan(dataset, k, _seed(seed, 0))
            split_preds = fit_nuisances_crossfit(dataset, plan, [spec(m) for m in split_models],
                                                 screen_within=screen_within)
        except ValueError as exc:
            split_error = str(exc)
    if full_models:
        try:
            full_preds = fit_nuisances_full(dataset, [spec(m) for m in full_models])
        except ValueError as exc:
            full_error = str(exc)

    reports = []
    for label, method, model in parsed:
        names = tuple(multi_models) if model == "multi" else (model,)
        try:
            if method == "dim":
                rep = diff_in_means(dataset)
            elif method == "nosplit_el":
                if full_error:
                    raise ValueError(full_error)
                rep = nosplit_el(dataset, full_preds.select(names))
            else:
                if split_error:
                    raise ValueError(split_error)
                sub = split_preds.select(names)
                if method == "wdtt":
                    rep = wdtt_estimate(dataset, plan, sub)
                else:
                    rep = mdel_report(dataset, plan, sub)
                    if model == "multi":
                        rep = _relabel(rep, ("multi",))
        except (ELInfeasibleError, VarianceError, ValueError, np.linalg.LinAlgError) as exc:
            rep = failed_report(label, dataset, 1 if method in ("dim", "nosplit_el") else k, str(exc))
        reports.append(rep)
    return reports


def _relabel(rep: EstimateReport, names) -> EstimateReport:
    return replace(rep, model_names=tuple(names))
