"""Empirical likelihood machinery for one treatment arm.

For arm constraint rows G_i (m rows, r columns) the weights are
p_i = 1 / (m (1 + lam' G_i)), where lam maximizes the concave dual
ell(lam) = sum_i log*(1 + lam' G_i). ``log*`` is the log with a quadratic
continuation below 1/m so that Newton iterates can leave the domain of the
log without breaking; at the solution every 1 + lam' G_i is at least 1/m and
log* coincides with log.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConstraintMatrix, ELSolution, FoldPlan, NuisancePredictions, TrialDataset

__all__ = [
    "ELInfeasibleError",
    "DualState",
    "Feasibility",
    "center_constraints",
    "center_arm",
    "feasibility_check",
    "solve_el_dual",
    "el_weights",
    "dual_objective",
    "dual_gradient",
    "dual_hessian",
    "estimating_function",
    "rank_revealing_solve",
    "PIVOT_TOL",
]

PIVOT_TOL = 1e-12
MAX_HALVINGS = 40


class ELInfeasibleError(RuntimeError):
    """Zero is (numerically) outside the convex hull of the constraint rows."""


def variance_floor(col: np.ndarray) -> float:
    return 1e-10 * (float(np.mean(col**2)) + 1.0)


def center_arm(preds: NuisancePredictions, dataset: TrialDataset, plan: FoldPlan,
               d: int) -> ConstraintMatrix:
    """Center arm-``d`` predictions at their all-unit mean and drop dead columns.

    A column is dropped when its values on the arm rows have variance below
    the floor, or when the prediction is flat within every fold (each
    fold's fit then carries no covariate information, e.g. an intercept-only
    penalized fit).
    """
    raw = preds.arm(d)
    xi = raw.mean(axis=0)
    g_all = raw - xi
    rows = dataset.arm(d)
    active = []
    for j in range(raw.shape[1]):
        col = g_all[rows, j]
        if np.var(col, ddof=1 if col.size > 1 else 0) <= variance_floor(col):
            continue
        flat_everywhere = True
        for k in range(plan.k):
            fk = g_all[plan.fold(k), j]
            if fk.size > 1 and np.var(fk, ddof=1) > variance_floor(fk):
                flat_everywhere = False
                break
        if flat_everywhere:
            continue
        active.append(j)
    g_all = np.ascontiguousarray(g_all)
    g_all.setflags(write=False)
    return ConstraintMatrix(d, rows, g_all, xi, tuple(active))


def center_constraints(preds: NuisancePredictions, dataset: TrialDataset,
                       plan: FoldPlan) -> dict[int, ConstraintMatrix]:
    """Centered constraints for both arms, keyed by arm."""
    return {d: center_arm(preds, dataset, plan, d) for d in (1, 0)}


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    column_min: np.ndarray
    column_max: np.ndarray


def feasibility_check(g: np.ndarray) -> Feasibility:
    """Per-column sign-change test: zero must lie strictly inside each column's range.

    This is necessary but not sufficient when there are several columns;
    joint feasibility is only certified by the solver converging.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    lo = g.min(axis=0)
    hi = g.max(axis=0)
    return Feasibility(bool(np.all((lo < 0) & (hi > 0))), lo, hi)


def _logstar(z: np.ndarray, eps: float):
    """log*(z) and its first two derivatives."""
    inside = z >= eps
    zc = np.where(inside, z, eps)
    f = np.where(inside, np.log(zc), np.log(eps) - 1.5 + 2 * z / eps - z**2 / (2 * eps**2))
    d1 = np.where(inside, 1 / zc, 2 / eps - z / eps**2)
    d2 = np.where(inside, -1 / zc**2, -1 / eps**2)
    return f, d1, d2


def _z(lam, g):
    return 1.0 + g @ lam


def dual_objective(lam, g, eps: float | None = None) -> float:
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    eps = 1 / g.shape[0] if eps is None else eps
    return float(_logstar(_z(np.asarray(lam, dtype=float), g), eps)[0].sum())


def dual_gradient(lam, g, eps: float | None = None) -> np.ndarray:
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    eps = 1 / g.shape[0] if eps is None else eps
    return g.T @ _logstar(_z(np.asarray(lam, dtype=float), g), eps)[1]


def dual_hessian(lam, g, eps: float | None = None) -> np.ndarray:
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    eps = 1 / g.shape[0] if eps is None else eps
    d2 = _logstar(_z(np.asarray(lam, dtype=float), g), eps)[2]
    return (g * d2[:, None]).T @ g


def estimating_function(lam, g) -> np.ndarray:
    """(1/m) sum_i G_i / (1 + lam' G_i); zero at the solution."""
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    return g.T @ (1 / _z(np.asarray(lam, dtype=float), g)) / g.shape[0]


def rank_revealing_solve(a: np.ndarray, b: np.ndarray, tol: float = PIVOT_TOL):
    """Solve a symmetric PSD system, discarding directions with tiny eigenvalues.

    Returns ``(x, rank)``; ``x`` is the minimum-norm solution restricted to
    eigenvalues above ``tol`` times the largest one.
    """
    w, v = np.linalg.eigh(a)
    top = w.max() if w.size else 0.0
    if top <= 0:
        return np.zeros_like(b), 0
    keep = w > tol * top
    x = v[:, keep] @ ((v[:, keep].T @ b) / w[keep])
    return x, int(keep.sum())


@dataclass
class DualState:
    lam: np.ndarray
    objective: float
    gradient: np.ndarray
    hessian: np.ndarray
    halvings: int = 0


def _state(lam, g, eps, halvings=0) -> DualState:
    f, d1, d2 = _logstar(_z(lam, g), eps)
    return DualState(lam, float(f.sum()), g.T @ d1, (g * d2[:, None]).T @ g, halvings)


def solve_el_dual(g, tol: float = 1e-10, max_iter: int = 100) -> ELSolution:
    """Maximize the dual by damped Newton iterations from lam = 0.

    Each Newton direction is found with :func:`rank_revealing_solve`, so
    redundant constraint columns are ignored rather than breaking the solve.
    Steps are halved (at most 40 times) until the objective does not decrease.
    Converged when every 1 + lam' G_i exceeds 1/m and the sup-norm of
    :func:`estimating_function` is below ``tol``.

    Raises
    ------
    ELInfeasibleError
        If the per-column sign test fails, the step halving stalls, the
        iteration budget runs out, or the final iterate leaves some
        1 + lam' G_i at or below 1/(10 m).
    """
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    m, r = g.shape
    if r == 0:
        return ELSolution(np.zeros(0), np.full(m, 1 / m), 0, 0.0, True, ())
    if not feasibility_check(g).feasible:
        raise ELInfeasibleError("EL infeasible: zero is outside the range of a constraint column")
    eps = 1 / m
    state = _state(np.zeros(r), g, eps)
    trace = [state.objective]

    def converged(lam):
        z = _z(lam, g)
        if np.any(z < eps):
            return False, np.inf
        est = np.max(np.abs(estimating_function(lam, g)))
        return est < tol, est

    it = 0
    done, est = converged(state.lam)
    while not done:
        if it >= max_iter:
            raise ELInfeasibleError(
                f"EL infeasible: no convergence in {max_iter} iterations (residual {est:.3g})"
            )
        step, rank = rank_revealing_solve(-state.hessian, state.gradient)
        if rank == 0:
            raise ELInfeasibleError("EL infeasible: dual Hessian vanished")
        t = 1.0
        for halvings in range(MAX_HALVINGS + 1):
            cand = state.lam + t * step
            new = _state(cand, g, eps, halvings)
            if new.objective >= state.objective:
                break
            # near the optimum the gain drops below rounding; fall back on the gradient
            slack = 1e-13 * (1 + abs(state.objective))
            if (new.objective >= state.objective - slack
                    and np.max(np.abs(new.gradient)) < np.max(np.abs(state.gradient))):
                break
            t *= 0.5
        else:
            raise ELInfeasibleError("EL infeasible: step halving stalled")
        state = new
        trace.append(state.objective)
        it += 1
        done, est = converged(state.lam)

    # A couple of undamped steps to push the residual to rounding level.
    lam = state.lam
    for _ in range(2):
        st = _state(lam, g, eps)
        step, _ = rank_revealing_solve(-st.hessian, st.gradient)
        ok, new_est = converged(lam + step)
        if new_est < est and np.all(_z(lam + step, g) >= eps):
            lam, est = lam + step, new_est
        else:
            break

    z = _z(lam, g)
    if np.any(z <= 1 / (10 * m)):
        raise ELInfeasibleError("EL infeasible: solution sits on the boundary of the hull")
    weights = el_weights(lam, g, m)
    return ELSolution(lam, weights, it, float(est), True, tuple(trace))


def el_weights(lam, g, m: int | None = None) -> np.ndarray:
    """p_i = 1 / (m (1 + lam' G_i)), renormalized to absorb rounding in the sum."""
    g = np.atleast_2d(np.asarray(g, dtype=float).T).T
    m = g.shape[0] if m is None else m
    z = _z(np.asarray(lam, dtype=float), g) if g.shape[1] else np.ones(g.shape[0])
    if np.any(z <= 0):
        raise RuntimeError("nonpositive EL weight denominator; lam is not a dual solution")
    p = 1 / (m * z)
    return p / p.sum()
