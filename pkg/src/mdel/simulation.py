"""Data-generating designs and the Monte Carlo driver.

Every design draws X ~ N(1_p, Sigma), D ~ Bernoulli(delta) and
Y | X, D=d ~ N(X'beta_d + 5 * 1(d = 1), 1); the designs differ in the arm
coefficients and in Sigma.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import TrialDataset, validate_dataset
from .estimators import normal_quantile
from .pipeline import default_estimators, parse_estimator, run_estimators

__all__ = [
    "DESIGNS",
    "SimulationSpec",
    "MetricsRow",
    "RepRecord",
    "arm_coefficients",
    "true_theta",
    "dgp_generate",
    "covariance",
    "ci_length",
    "run_replication",
    "aggregate",
    "monte_carlo_run",
]

DESIGNS = ("sparse", "fan", "geometric", "figure1", "figure2")

# 1-based covariate indices and values for the "fan" design
FAN_INDEX = (1, 2, 3, 5, 7, 11, 13, 17, 19, 23)
FAN_COEF = (1.01, -0.06, 0.72, 1.55, 2.32, -0.36, 3.75, -2.04, -0.13, 0.61)

TREATMENT_SHIFT = 5.0


@dataclass(frozen=True)
class SimulationSpec:
    design: str
    n: int
    p: int
    rho: float = 0.0
    delta: float = 0.5
    reps: int = 100
    k: int = 5
    estimators: tuple[str, ...] = ()
    seed: int = 0
    multi_models: tuple[str, ...] = ("lasso", "scad", "rf")
    spec_overrides: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.n < 20:
            raise ValueError("n must be at least 20")
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.estimators:
            object.__setattr__(self, "estimators", default_estimators(("lasso",)))
        for lab in self.estimators:
            parse_estimator(lab)

    @property
    def equicorrelated(self) -> bool:
        return self.design == "sparse"


def arm_coefficients(spec: SimulationSpec) -> tuple[np.ndarray, np.ndarray]:
    """(beta_treated, beta_control) for the design."""
    p = spec.p
    i = np.arange(1, p + 1)
    if spec.design == "sparse":
        return 3.0 * (i <= 3), 2.0 * (i <= 3)
    if spec.design == "fan":
        b = np.zeros(p)
        for idx, c in zip(FAN_INDEX, FAN_COEF):
            if idx <= p:
                b[idx - 1] = c
        return b, b.copy()
    if spec.design == "geometric":
        return 11.0 ** (-10 * i / p), 10.0 ** (-10 * i / p)
    if spec.design == "figure1":
        b = np.zeros(p)
        b[0] = 1.0
        return b, b.copy()
    # figure2: one permutation of (1, 1/2, ..., 1/p), fixed by the base seed
    rng = np.random.default_rng([spec.seed, 7919])
    b = rng.permutation(1.0 / i)
    return b, b.copy()


def true_theta(spec: SimulationSpec) -> float:
    """5 + 1'beta_treated - 1'beta_control, since E[X] = 1_p."""
    b1, b0 = arm_coefficients(spec)
    return TREATMENT_SHIFT + (float(b1.sum()) - float(b0.sum()))


def covariance(spec: SimulationSpec) -> np.ndarray:
    """Dense Sigma, for reference and tests; sampling never forms it."""
    p, rho = spec.p, spec.rho
    if spec.equicorrelated:
        return np.where(np.eye(p, dtype=bool), 1.0, rho)
    i = np.arange(p)
    return rho ** np.abs(i[:, None] - i[None, :])


def _draw_x(spec: SimulationSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, spec.p))
    rho = spec.rho
    if rho == 0:
        return 1.0 + z
    if spec.equicorrelated:
        # rank-one factor: sqrt(1-rho) Z + sqrt(rho) w 1'
        w = rng.standard_normal((n, 1))
        return 1.0 + math.sqrt(1 - rho) * z + math.sqrt(rho) * w
    # AR(1) Cholesky factor applied as a recursion across columns
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    s = math.sqrt(1 - rho * rho)
    for j in range(1, spec.p):
        x[:, j] = rho * x[:, j - 1] + s * z[:, j]
    return 1.0 + x


def dgp_generate(spec: SimulationSpec, rep_seed: int) -> tuple[TrialDataset, int]:
    """One simulated trial and the number of times D had to be redrawn."""
    rng = np.random.default_rng(rep_seed)
    n = spec.n
    x = _draw_x(spec, rng, n)
    redraws = 0
    while True:
        d = (rng.random(n) < spec.delta).astype(float)
        if 0 < d.sum() < n:
            break
        redraws += 1
    b1, b0 = arm_coefficients(spec)
    mean = np.where(d == 1, x @ b1 + TREATMENT_SHIFT, x @ b0)
    y = mean + rng.standard_normal(n)
    return validate_dataset(y, d, x), redraws


@dataclass(frozen=True)
class RepRecord:
    rep: int
    estimator: str
    model: str
    estimate: float
    se: float
    covered95: bool
    covered99: bool
    ci95_len: float
    ci99_len: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.estimate)


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    model: str
    bias: float
    sd: float
    se: float
    rmse: float
    cov95: float
    cov99: float
    theta: float
    reps: int
    failures: int = 0
    mean_sq_ci_len_95: float = math.nan
    mean_sq_ci_len_99: float = math.nan
    warnings: str = ""

    @property
    def label(self) -> str:
        return f"{self.estimator}:{self.model}" if self.model else self.estimator


def ci_length(se: float, level: float) -> float:
    """Wald interval length 2 z se, computed from se alone so it round-trips."""
    return 2.0 * normal_quantile(level) * se


def run_replication(spec: SimulationSpec, m: int) -> list[RepRecord]:
    seed = spec.seed + m
    data, _ = dgp_generate(spec, seed)
    theta = true_theta(spec)
    reports = run_estimators(data, spec.estimators, k=spec.k, seed=seed,
                             multi_models=spec.multi_models,
                             spec_overrides=spec.spec_overrides or None)
    out = []
    for label, rep in zip(spec.estimators, reports):
        method, model = parse_estimator(label)
        lo95, hi95 = rep.ci95
        lo99, hi99 = rep.ci99
        ok = math.isfinite(rep.theta_hat)
        out.append(RepRecord(
            rep=m, estimator=method, model=model, estimate=rep.theta_hat, se=rep.se,
            covered95=bool(ok and lo95 <= theta <= hi95),
            covered99=bool(ok and lo99 <= theta <= hi99),
            ci95_len=ci_length(rep.se, 0.95), ci99_len=ci_length(rep.se, 0.99),
            error="" if ok else "; ".join(rep.warnings),
        ))
    return out


def aggregate(records: list[RepRecord], theta: float) -> list[MetricsRow]:
    """Bias, SD, mean SE, RMSE and Wald coverage per estimator.

    Failed replications are excluded and counted in ``failures``. With a
    single successful replication the SD is reported as 0 and flagged.
    """
    groups: dict[tuple[str, str], list[RepRecord]] = {}
    for rec in sorted(records, key=lambda r: r.rep):
        groups.setdefault((rec.estimator, rec.model), []).append(rec)
    rows = []
    for (method, model), recs in groups.items():
        good = [r for r in recs if not r.failed]
        failures = len(recs) - len(good)
        notes = []
        if failures:
            notes.append(f"{failures} failed replications excluded")
        if not good:
            rows.append(MetricsRow(method, model, *(math.nan,) * 6, theta, 0, failures,
                                   warnings="; ".join(notes)))
            continue
        est = np.array([r.estimate for r in good])
        se = np.array([r.se for r in good])
        err = est - theta
        if len(good) > 1:
            sd = float(np.std(est, ddof=1))
        else:
            sd = 0.0
            notes.append("single replication: sd reported as 0")
        rows.append(MetricsRow(
            estimator=method, model=model,
            bias=float(err.mean()), sd=sd, se=float(se.mean()),
            rmse=float(np.sqrt(np.mean(err**2))),
            cov95=float(np.mean([r.covered95 for r in good])),
            cov99=float(np.mean([r.covered99 for r in good])),
            theta=theta, reps=len(good), failures=failures,
            mean_sq_ci_len_95=float(np.mean([r.ci95_len**2 for r in good])),
            mean_sq_ci_len_99=float(np.mean([r.ci99_len**2 for r in good])),
            warnings="; ".join(notes),
        ))
    return rows


def _run_chunk(args):
    spec, reps = args
    return [rec for m in reps for rec in run_replication(spec, m)]


def monte_carlo_run(spec: SimulationSpec, workers: int = 1,
                    progress=None) -> tuple[list[RepRecord], list[MetricsRow]]:
    """Run ``spec.reps`` replications; replication m uses seed ``spec.seed + m``.

    Results are identical for any ``workers`` because each replication is
    seeded on its own and records are re-sorted by replication index before
    aggregation.
    """
    reps = list(range(spec.reps))
    records: list[RepRecord] = []
    if workers <= 1:
        for m in reps:
            records.extend(run_replication(spec, m))
            if progress:
                progress(m + 1, spec.reps)
    else:
        chunks = [reps[i::workers * 4] for i in range(min(len(reps), workers * 4))]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, [(spec, c) for c in chunks]):
                records.extend(part)
        records.sort(key=lambda r: (r.rep, spec.estimators.index(
            f"{r.estimator}:{r.model}" if r.model else r.estimator)))
    rows = aggregate(records, true_theta(spec))
    if rows and all(r.reps == 0 for r in rows):
        warnings.warn("every replication failed for every estimator")
    return records, rows
