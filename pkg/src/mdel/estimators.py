"""Average treatment effect estimators and their standard errors."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .core import (
    ConstraintMatrix,
    ELSolution,
    EstimateReport,
    FoldPlan,
    NuisancePredictions,
    TrialDataset,
)
from .el import PIVOT_TOL, center_constraints, rank_revealing_solve, solve_el_dual

__all__ = [
    "VarianceError",
    "normal_quantile",
    "wald_ci",
    "make_report",
    "diff_in_means",
    "dim_influence_variance",
    "wdtt_estimate",
    "MDELFit",
    "mdel_estimate",
    "mdel_variance",
    "mdel_influence",
    "mdel_report",
    "nosplit_el",
]

DEGENERATE = "degenerate constraints"


class VarianceError(RuntimeError):
    pass


_STD_NORMAL = NormalDist()


def normal_quantile(level: float) -> float:
    """Upper (1 - level)/2 standard normal quantile, e.g. 1.959964 for 0.95."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    # NormalDist.inv_cdf is Wichura's AS241 rational approximation (~1e-16).
    return _STD_NORMAL.inv_cdf(0.5 + level / 2)


def wald_ci(theta: float, se: float, level: float = 0.95) -> tuple[float, float]:
    if se < 0:
        raise ValueError("standard error must be nonnegative")
    z = normal_quantile(level)
    return float(theta - z * se), float(theta + z * se)


def make_report(method, theta, se, dataset: TrialDataset, k, model_names=(),
                warnings=(), theta1=None, theta0=None) -> EstimateReport:
    return EstimateReport(
        method=method,
        theta_hat=float(theta),
        se=float(se),
        ci95=wald_ci(theta, se, 0.95),
        ci99=wald_ci(theta, se, 0.99),
        n=dataset.n,
        p=dataset.p,
        k=k,
        model_names=tuple(model_names),
        warnings=tuple(warnings),
        theta1=None if theta1 is None else float(theta1),
        theta0=None if theta0 is None else float(theta0),
    )


def _svar(v: np.ndarray) -> float:
    return float(np.var(v, ddof=1)) if v.size > 1 else 0.0


def diff_in_means(dataset: TrialDataset) -> EstimateReport:
    y1 = dataset.y[dataset.d == 1]
    y0 = dataset.y[dataset.d == 0]
    theta = y1.mean() - y0.mean()
    se = np.sqrt(_svar(y1) / y1.size + _svar(y0) / y0.size)
    warn = ()
    if min(y1.size, y0.size) < 2:
        warn = ("single-unit arm: its variance is taken as 0",)
    return make_report("dim", theta, se, dataset, 1, (), warn, y1.mean(), y0.mean())


def dim_influence_variance(dataset: TrialDataset) -> float:
    """n^-2 sum {(n/n1) D (Y - ybar1) - (n/n0)(1 - D)(Y - ybar0)}^2."""
    n, n1, n0 = dataset.n, dataset.n1, dataset.n0
    d, y = dataset.d, dataset.y
    m1 = y[d == 1].mean()
    m0 = y[d == 0].mean()
    psi = (n / n1) * d * (y - m1) - (n / n0) * (1 - d) * (y - m0)
    return float(psi @ psi / n**2)


def wdtt_estimate(dataset: TrialDataset, plan: FoldPlan,
                  preds: NuisancePredictions) -> EstimateReport:
    """Cross-fitted regression adjustment with the fold-conditional variance.

    On fold k, with treated share s = n1k/nk, the efficient-score equation
    solves to mean_k1(Y - g1) - mean_k0(Y - g0) + mean_k(g1 - g0). The
    overall estimate averages the fold estimates; the variance sums
    (nk/n)^2 times the per-fold plug-in variance of
    Y - (1 - s) g1 - s g0 within each arm, scaled by 1/nkd.
    """
    if preds.r != 1:
        raise ValueError("wdtt uses exactly one model per arm")
    g1 = preds.treated[:, 0]
    g0 = preds.control[:, 0]
    y, d = dataset.y, dataset.d
    n = dataset.n
    thetas = []
    var = 0.0
    for k in range(plan.k):
        fk = plan.fold(k)
        t = fk[d[fk] == 1]
        c = fk[d[fk] == 0]
        if t.size < 2 or c.size < 2:
            raise ValueError(f"fewer than two units of an arm within fold {k + 1}")
        nk = fk.size
        share1 = t.size / nk
        share0 = c.size / nk
        theta_k = (y[t] - g1[t]).mean() - (y[c] - g0[c]).mean() + (g1[fk] - g0[fk]).mean()
        thetas.append(theta_k)
        resid = y - share0 * g1 - share1 * g0
        var_k = _svar(resid[t]) / t.size + _svar(resid[c]) / c.size
        var += (nk / n) ** 2 * var_k
    theta = float(np.mean(thetas))
    return make_report("wdtt", theta, np.sqrt(var), dataset, plan.k, preds.model_names)


@dataclass(frozen=True)
class MDELFit:
    theta: float
    theta1: float
    theta0: float
    solutions: dict[int, ELSolution]
    constraints: dict[int, ConstraintMatrix]

    @property
    def degenerate_arms(self) -> tuple[int, ...]:
        return tuple(d for d in (1, 0) if self.constraints[d].degenerate)

    def unit_weights(self, dataset: TrialDataset) -> np.ndarray:
        w = np.empty(dataset.n)
        for d in (1, 0):
            w[self.constraints[d].rows] = self.solutions[d].weights
        return w


def mdel_estimate(dataset: TrialDataset, plan: FoldPlan,
                  preds: NuisancePredictions) -> MDELFit:
    """EL-weighted arm means; an arm with no usable constraint gets uniform weights.

    Raises :class:`mdel.el.ELInfeasibleError` when an arm's dual has no
    interior solution.
    """
    constraints = center_constraints(preds, dataset, plan)
    solutions = {}
    means = {}
    for d in (1, 0):
        c = constraints[d]
        solutions[d] = solve_el_dual(c.g)
        means[d] = float(solutions[d].weights @ dataset.y[c.rows])
    return MDELFit(means[1] - means[0], means[1], means[0], solutions, constraints)


def mdel_influence(dataset: TrialDataset, fit: MDELFit) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit plug-in influence values and the weights that average their squares.

    Returns ``(psi, w)`` with sigma^2 = (1/n) sum_i w_i psi_i^2, where
    w_i = (n_arm(i)/n) p_i.
    """
    n, n1, n0 = dataset.n, dataset.n1, dataset.n0
    y, dd = dataset.y, dataset.d
    delta = n1 / n
    p = fit.unit_weights(dataset)
    arm_share = np.where(dd == 1, n1 / n, n0 / n)
    w = arm_share * p

    correction = {}
    for d in (1, 0):
        c = fit.constraints[d]
        if c.degenerate:
            correction[d] = np.zeros(n)
            continue
        g = c.g_active_all
        rows = c.rows
        j_hat = g[rows].T @ (p[rows] * y[rows])
        s_hat = (g * w[:, None]).T @ g
        coef, rank = rank_revealing_solve(s_hat, j_hat, PIVOT_TOL)
        if rank == 0:
            raise VarianceError("variance not identifiable: constraint second-moment matrix is singular")
        correction[d] = g @ coef

    psi = ((n / n1) * dd * (y - fit.theta1)
           - (n / n1) * (dd - delta) * correction[1]
           - (n / n0) * (1 - dd) * (y - fit.theta0)
           - (n / n0) * (dd - delta) * correction[0])
    return psi, w


def mdel_variance(dataset: TrialDataset, fit: MDELFit) -> float:
    """Weighted second moment of the plug-in influence function, on the scale of Var(theta_hat)."""
    psi, w = mdel_influence(dataset, fit)
    sigma2 = float(w @ psi**2) / dataset.n
    return sigma2


def mdel_report(dataset: TrialDataset, plan: FoldPlan, preds: NuisancePredictions,
                method: str = "mdel") -> EstimateReport:
    fit = mdel_estimate(dataset, plan, preds)
    sigma2 = mdel_variance(dataset, fit)
    warn = (DEGENERATE,) if fit.degenerate_arms else ()
    return make_report(method, fit.theta, np.sqrt(sigma2), dataset, plan.k,
                       preds.model_names, warn, fit.theta1, fit.theta0)


def nosplit_el(dataset: TrialDataset, preds_full: NuisancePredictions) -> EstimateReport:
    """The same EL estimator and variance, fed in-sample (unsplit) predictions.

    Kept as the comparison that shows why splitting matters: in-sample fits
    absorb outcome noise and the variance comes out too small.
    """
    return mdel_report(dataset, FoldPlan.single(dataset.n), preds_full, method="nosplit_el")
