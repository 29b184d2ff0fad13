"""Sure independence screening by marginal correlation with the outcome."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TrialDataset

__all__ = ["ScreenResult", "sis_screen", "marginal_scores", "top_columns"]


@dataclass(frozen=True)
class ScreenResult:
    kept: np.ndarray
    scores: np.ndarray


def marginal_scores(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|Pearson correlation| of each column with ``y``; constant columns score 0."""
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((xc**2).sum(axis=0))
    sy = np.sqrt(yc @ yc)
    num = np.abs(xc.T @ yc)
    ok = (sx > 1e-12 * (np.abs(x).max(axis=0) + 1.0)) & (sy > 0)
    scores = np.zeros(x.shape[1])
    scores[ok] = num[ok] / (sx[ok] * sy)
    return np.clip(scores, 0.0, 1.0)


def top_columns(scores: np.ndarray, d_x: int) -> np.ndarray:
    # stable sort on -score keeps lower column index first among ties
    return np.argsort(-scores, kind="stable")[:d_x]


def sis_screen(dataset: TrialDataset, d_x: int) -> ScreenResult:
    """Keep the ``d_x`` columns most correlated with the outcome.

    A column's score is the larger of its within-arm absolute correlations
    with Y, so a covariate that matters in only one arm still survives.
    """
    if not 1 <= d_x <= dataset.p:
        raise ValueError(f"d_x must lie in [1, {dataset.p}], got {d_x}")
    scores = np.zeros(dataset.p)
    for d in (0, 1):
        idx = dataset.arm(d)
        if idx.size >= 2:
            scores = np.maximum(scores, marginal_scores(dataset.x[idx], dataset.y[idx]))
    return ScreenResult(top_columns(scores, d_x), scores)
