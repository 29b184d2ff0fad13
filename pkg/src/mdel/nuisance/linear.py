"""Penalized least squares (Lasso, SCAD) with cross-validated penalty level."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _cd
from .models import NuisanceModelSpec

__all__ = ["LinearFit", "fit_lasso", "fit_scad", "lambda_grid", "penalized_objective"]


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    coefficients: np.ndarray
    penalty_value: float
    x_means: np.ndarray
    x_scales: np.ndarray
    kind: str = "lasso"

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, x_query) -> np.ndarray:
        x_query = np.asarray(x_query, dtype=float)
        if x_query.ndim != 2 or x_query.shape[1] != self.p:
            raise ValueError(f"expected {self.p} columns, got shape {x_query.shape}")
        return self.intercept + x_query @ self.coefficients


class _Standardized:
    """Centered y and standardized, transposed X for the compiled kernels."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        n = x.shape[0]
        self.n = n
        self.y_mean = float(y.mean())
        self.yc = y - self.y_mean
        self.means = x.mean(axis=0)
        xc = x - self.means
        scales = np.sqrt((xc**2).mean(axis=0))
        self.usable = scales > 1e-10 * (np.abs(self.means) + 1.0)
        self.scales = np.where(self.usable, scales, 1.0)
        xs = np.where(self.usable, xc / self.scales, 0.0)
        self.xs = xs
        self.xt = np.ascontiguousarray(xs.T)

    def lambda_max(self) -> float:
        if not self.usable.any():
            return 0.0
        return float(np.max(np.abs(self.xs.T @ self.yc)) / self.n)

    def to_original(self, beta_std: np.ndarray) -> tuple[float, np.ndarray]:
        coef = np.where(self.usable, beta_std / self.scales, 0.0)
        return self.y_mean - float(self.means @ coef), coef


def lambda_grid(lam_max: float, n_lambda: int = 100, min_ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced, decreasing grid from ``lam_max`` to ``min_ratio * lam_max``."""
    if lam_max <= 0:
        return np.zeros(1)
    return np.exp(np.linspace(np.log(lam_max), np.log(lam_max * min_ratio), n_lambda))


def penalized_objective(xs: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float,
                        kind: str = "lasso", a: float = 3.7) -> float:
    """(1/2n)||y - X beta||^2 + penalty, on the standardized scale."""
    r = y - xs @ beta
    code = _cd.LASSO if kind == "lasso" else _cd.SCAD
    return float(r @ r / (2 * len(y))) + float(_cd.penalty_value(beta, lam, a, code))


def _polish(st: _Standardized, beta: np.ndarray, lam: float, kind: str, a: float) -> np.ndarray:
    # Solve the stationarity equations on the support with signs and SCAD
    # regions held fixed; keep the result only if it is self-consistent.
    active = np.flatnonzero(beta)
    if active.size == 0 or active.size >= st.n:
        return beta
    xa = st.xs[:, active]
    gram = xa.T @ xa / st.n
    rhs = xa.T @ st.yc / st.n
    s = np.sign(beta[active])
    absb = np.abs(beta[active])
    if kind == "lasso":
        rhs = rhs - lam * s
    else:
        mid = (absb > lam) & (absb <= a * lam)
        low = absb <= lam
        rhs = rhs - np.where(low, lam * s, 0.0) - np.where(mid, a * lam * s / (a - 1), 0.0)
        gram = gram - np.diag(np.where(mid, 1.0 / (a - 1), 0.0))
    try:
        if np.linalg.cond(gram) > 1e10:
            return beta
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return beta
    if np.any(np.sign(sol) != s) or np.max(np.abs(sol - beta[active])) > 1e-3 * (1 + np.max(absb)):
        return beta
    if kind == "scad":
        abss = np.abs(sol)
        if np.any((abss <= lam) != (absb <= lam)) or np.any((abss <= a * lam) != (absb <= a * lam)):
            return beta
    out = beta.copy()
    out[active] = sol
    grad = st.xs.T @ (st.yc - st.xs @ out) / st.n
    inactive = np.setdiff1d(np.flatnonzero(st.usable), active)
    if inactive.size and np.max(np.abs(grad[inactive])) > lam * (1 + 1e-9) + 1e-12:
        return beta
    return out


def _cv_fold_labels(n: int, nfolds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % nfolds
    return rng.permutation(labels)


def _fit_penalized(x, y, spec: NuisanceModelSpec, kind: str) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be an n x p matrix matching y")
    n, p = x.shape
    if n < 3:
        raise ValueError("need at least 3 observations for a penalized fit")
    st = _Standardized(x, y)
    code = _cd.LASSO if kind == "lasso" else _cd.SCAD
    a = spec.scad_a

    if np.ptp(y) == 0 or not st.usable.any():
        return LinearFit(float(y.mean()), np.zeros(p), 0.0, st.means, st.scales, kind)

    lam_max = st.lambda_max()
    grid = lambda_grid(lam_max, spec.n_lambda, spec.lambda_min_ratio)
    if spec.penalty is not None:
        lam = float(spec.penalty)
        grid = np.concatenate([grid[grid > lam], [lam]])
        path, _ = _cd.cd_path(st.xt, st.usable, st.yc, grid, a, code, spec.tol,
                              spec.max_sweeps, False)
        beta = path[-1]
    else:
        path, n_used = _cd.cd_path(st.xt, st.usable, st.yc, grid, a, code,
                                   spec.tol, spec.max_sweeps, True)
        grid = grid[:n_used]
        nfolds = min(spec.cv_folds, n)
        labels = _cv_fold_labels(n, nfolds, spec.seed)
        x_t = np.ascontiguousarray(x.T)
        err = _cd.cv_path_errors(x_t, y, labels, nfolds, grid, a, code, spec.tol, spec.max_sweeps)
        best = int(np.argmin(err))
        lam = float(grid[best])
        beta = path[best]
    beta = _polish(st, beta, lam, kind, a)
    intercept, coef = st.to_original(beta)
    return LinearFit(intercept, coef, lam, st.means, st.scales, kind)


def fit_lasso(x, y, spec: NuisanceModelSpec | None = None) -> LinearFit:
    """L1-penalized least squares by coordinate descent.

    Predictors are standardized internally (the intercept is never
    penalized) and coefficients are returned on the original scale. Unless
    ``spec.penalty`` is set, the penalty level is the minimizer of
    ``spec.cv_folds``-fold cross-validated squared error over a log-spaced grid
    running from the smallest penalty that zeroes every slope down to
    ``spec.lambda_min_ratio`` times that value.
    """
    spec = spec or NuisanceModelSpec("lasso")
    return _fit_penalized(x, y, spec, "lasso")


def fit_scad(x, y, spec: NuisanceModelSpec | None = None) -> LinearFit:
    """SCAD-penalized least squares; same grid and CV rule as :func:`fit_lasso`."""
    spec = spec or NuisanceModelSpec("scad")
    return _fit_penalized(x, y, spec, "scad")
