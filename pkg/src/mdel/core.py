"""Domain types shared across the package.

All containers are frozen dataclasses holding read-only numpy arrays, so they
can be handed to worker processes without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DatasetError",
    "TrialDataset",
    "FoldPlan",
    "NuisancePredictions",
    "ConstraintMatrix",
    "ELSolution",
    "EstimateReport",
    "validate_dataset",
    "make_fold_plan",
]


class DatasetError(ValueError):
    """Raised when raw arrays violate one or more dataset invariants.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrialDataset:
    """Outcomes ``y``, binary treatment flags ``d`` and covariates ``x`` (n x p)."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        # Construction goes through validate_dataset; this only freezes buffers.
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "d", _frozen(self.d))
        object.__setattr__(self, "x", _frozen(self.x))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n1(self) -> int:
        return int(self.d.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def delta_hat(self) -> float:
        return self.n1 / self.n

    def arm(self, d: int) -> np.ndarray:
        """Indices of the units in arm ``d``."""
        return np.flatnonzero(self.d == d)

    def with_columns(self, cols) -> "TrialDataset":
        return TrialDataset(self.y, self.d, self.x[:, np.asarray(cols, dtype=int)])


def validate_dataset(y, d, x) -> TrialDataset:
    """Check raw arrays and build a :class:`TrialDataset`.

    Raises
    ------
    DatasetError
        Listing every violated invariant (shape mismatch, non-binary
        treatment, non-finite entries, empty arm).
    """
    problems: list[str] = []
    y = np.asarray(y, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim != 1 or d.ndim != 1 or x.ndim != 2:
        raise DatasetError(["y and d must be vectors and x a matrix"])

    n = y.shape[0]
    if d.shape[0] != n or x.shape[0] != n:
        problems.append(f"length mismatch: |y|={n}, |d|={d.shape[0]}, rows(x)={x.shape[0]}")
    if n < 2:
        problems.append(f"need at least 2 units, got {n}")

    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        problems.append(f"y has non-finite values at rows {bad.tolist()}")
    bad = np.flatnonzero(~np.isfinite(d))
    if bad.size:
        problems.append(f"d has non-finite values at rows {bad.tolist()}")
    bad = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
    if bad.size:
        problems.append(f"x has non-finite values at rows {bad.tolist()}")

    finite_d = d[np.isfinite(d)]
    nonbinary = np.flatnonzero(np.isfinite(d) & (d != 0) & (d != 1))
    if nonbinary.size:
        problems.append(f"d is not binary at rows {nonbinary.tolist()}")
    elif finite_d.size == d.size and d.size > 0:
        if not np.any(d == 1):
            problems.append("treated arm empty")
        if not np.any(d == 0):
            problems.append("control arm empty")

    if problems:
        raise DatasetError(problems)
    return TrialDataset(y, d, x)


@dataclass(frozen=True)
class FoldPlan:
    """Per-unit fold labels in ``0..k-1``, balanced within each arm.

    Labels are zero-based here; user-facing output adds one.
    """

    k: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignment, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        if self.k < 1:
            raise ValueError("fold count must be positive")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise ValueError("fold labels out of range")

    @classmethod
    def single(cls, n: int) -> "FoldPlan":
        """Everything in one fold (no sample splitting)."""
        return cls(1, np.zeros(n, dtype=np.int64))

    def fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def fold_arm(self, dataset: TrialDataset, k: int, d: int) -> np.ndarray:
        return np.flatnonzero((self.assignment == k) & (dataset.d == d))

    def complement_arm(self, dataset: TrialDataset, k: int, d: int) -> np.ndarray:
        """Arm-``d`` units outside fold ``k`` (the training set for that fold)."""
        if self.k == 1:
            return dataset.arm(d)
        return np.flatnonzero((self.assignment != k) & (dataset.d == d))


def make_fold_plan(dataset: TrialDataset, k: int, seed: int) -> FoldPlan:
    """Shuffle each arm with a seeded RNG and deal units round-robin into ``k`` folds."""
    if not 2 <= k <= min(dataset.n0, dataset.n1):
        raise ValueError(
            f"insufficient arm size for K folds: k={k}, n0={dataset.n0}, n1={dataset.n1}"
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(dataset.n, dtype=np.int64)
    for d in (1, 0):
        idx = dataset.arm(d)
        perm = rng.permutation(idx)
        assignment[perm] = np.arange(perm.size) % k
    return FoldPlan(k, assignment)


@dataclass(frozen=True)
class NuisancePredictions:
    """Cross-fitted predictions, one n x r matrix per arm model.

    ``by_arm[d][i, j]`` is model ``j``'s prediction of E[Y | X_i, D=d] from the
    fit trained on arm-``d`` units outside unit ``i``'s fold.
    """

    treated: np.ndarray
    control: np.ndarray
    model_names: tuple[str, ...]

    def __post_init__(self):
        t = _frozen(np.atleast_2d(np.asarray(self.treated, dtype=float).T).T)
        c = _frozen(np.atleast_2d(np.asarray(self.control, dtype=float).T).T)
        if t.shape != c.shape:
            raise ValueError(f"arm prediction shapes differ: {t.shape} vs {c.shape}")
        if t.shape[1] != len(self.model_names) or t.shape[1] < 1:
            raise ValueError("need one model name per prediction column")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(c))):
            raise ValueError("nuisance predictions must be finite")
        object.__setattr__(self, "treated", t)
        object.__setattr__(self, "control", c)
        object.__setattr__(self, "model_names", tuple(self.model_names))

    @property
    def r(self) -> int:
        return self.treated.shape[1]

    def arm(self, d: int) -> np.ndarray:
        return self.treated if d == 1 else self.control

    def select(self, names) -> "NuisancePredictions":
        cols = [self.model_names.index(m) for m in names]
        return NuisancePredictions(self.treated[:, cols], self.control[:, cols], tuple(names))

    def shifted(self, b1: float, b0: float) -> "NuisancePredictions":
        return NuisancePredictions(self.treated + b1, self.control + b0, self.model_names)


@dataclass(frozen=True)
class ConstraintMatrix:
    """Centered constraint values for one arm.

    ``g_all`` holds the centered predictions for all n units (needed by the
    variance estimator); ``g`` restricts them to the arm rows and to the active
    columns.
    """

    arm: int
    rows: np.ndarray
    g_all: np.ndarray
    xi_hat: np.ndarray
    active_columns: tuple[int, ...]

    @property
    def g(self) -> np.ndarray:
        return self.g_all[np.ix_(self.rows, self.active_columns)]

    @property
    def g_active_all(self) -> np.ndarray:
        return self.g_all[:, list(self.active_columns)]

    @property
    def degenerate(self) -> bool:
        return len(self.active_columns) == 0


@dataclass(frozen=True)
class ELSolution:
    """Solved dual for one arm: multiplier, weights and convergence record."""

    lam: np.ndarray
    weights: np.ndarray
    iterations: int
    max_grad: float
    feasible: bool
    objective_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class EstimateReport:
    method: str
    theta_hat: float
    se: float
    ci95: tuple[float, float]
    ci99: tuple[float, float]
    n: int
    p: int
    k: int
    model_names: tuple[str, ...] = ()
    warnings: tuple[str, ...] = field(default_factory=tuple)
    theta1: float | None = None
    theta0: float | None = None

    @property
    def model(self) -> str:
        return "+".join(self.model_names) if self.model_names else ""
