from __future__ import annotations

from dataclasses import dataclass, replace

KINDS = ("lasso", "scad", "random_forest")
SHORT_NAMES = {"lasso": "lasso", "scad": "scad", "random_forest": "rf"}


@dataclass(frozen=True)
class NuisanceModelSpec:
    """Learner choice plus tuning knobs.

    ``penalty`` fixes the penalty level of a Lasso/SCAD fit and skips
    cross-validation; ``None`` means select it by CV. ``mtry=None`` means
    max(1, p // 3).
    """

    kind: str
    cv_folds: int = 10
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    scad_a: float = 3.7
    penalty: float | None = None
    tol: float = 1e-7
    max_sweeps: int = 10_000
    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nuisance model kind {self.kind!r}")
        for name in ("cv_folds", "n_lambda", "n_trees", "min_node_size", "max_sweeps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.kind == "scad" and self.scad_a <= 2:
            raise ValueError("SCAD needs a > 2")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.penalty is not None and self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        if self.mtry is not None and self.mtry <= 0:
            raise ValueError("mtry must be positive")

    @property
    def name(self) -> str:
        return SHORT_NAMES[self.kind]

    def with_seed(self, seed: int) -> "NuisanceModelSpec":
        return replace(self, seed=int(seed))


def spec_for(name: str, **overrides) -> NuisanceModelSpec:
    """Default spec from a short model name (``lasso``, ``scad``, ``rf``)."""
    kind = {"lasso": "lasso", "scad": "scad", "rf": "random_forest",
            "random_forest": "random_forest"}.get(name)
    if kind is None:
        raise ValueError(f"unknown model {name!r}")
    return NuisanceModelSpec(kind, **overrides)
