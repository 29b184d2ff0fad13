import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bisect_lambda

from mdel import FoldPlan, NuisancePredictions, validate_dataset
from mdel.el import (
    ELInfeasibleError,
    center_arm,
    center_constraints,
    dual_gradient,
    dual_hessian,
    dual_objective,
    el_weights,
    estimating_function,
    feasibility_check,
    rank_revealing_solve,
    solve_el_dual,
)


def _feasible_instance(rng, m, r=1):
    while True:
        g = rng.standard_normal((m, r)) + rng.uniform(-0.6, 0.6, size=r)
        if feasibility_check(g).feasible:
            return g


class TestCenterConstraints:
    def _setup(self, treated_col, control_col=None, d=(1, 0, 1, 0)):
        n = len(d)
        ds = validate_dataset(np.arange(n, dtype=float), d, np.zeros((n, 1)))
        control_col = treated_col if control_col is None else control_col
        preds = NuisancePredictions(np.c_[treated_col], np.c_[control_col], ("m",))
        plan = FoldPlan(2, np.array([0, 0, 1, 1][:n]))
        return ds, preds, plan

    def test_constant_column_dropped(self):
        ds, preds, plan = self._setup([3.0, 3.0, 3.0, 3.0])
        c = center_constraints(preds, ds, plan)[1]
        assert c.xi_hat[0] == 3.0
        assert c.degenerate
        np.testing.assert_array_equal(c.g_all[:, 0], 0.0)

    def test_index_column(self):
        ds, preds, plan = self._setup([1.0, 2.0, 3.0, 4.0])
        c = center_constraints(preds, ds, plan)[1]
        assert c.xi_hat[0] == 2.5
        np.testing.assert_allclose(c.g_all[:, 0], [-1.5, -0.5, 0.5, 1.5])
        np.testing.assert_allclose(c.g[:, 0], [-1.5, 0.5])

    def test_shift_leaves_centered_values(self):
        ds, preds, plan = self._setup([0.3, 1.7, -2.0, 4.1])
        a = center_constraints(preds, ds, plan)[0].g_all
        b = center_constraints(preds.shifted(5.0, -11.0), ds, plan)[0].g_all
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_flat_within_every_fold_is_dropped(self):
        # varies across folds but not inside any: an intercept-only fit per fold
        ds, preds, plan = self._setup([1.0, 1.0, 2.0, 2.0])
        assert center_arm(preds, ds, plan, 1).degenerate


class TestFeasibility:
    def test_sign_change(self):
        assert feasibility_check(np.array([-1.0, 2.0, 3.0])).feasible

    def test_no_sign_change(self):
        assert not feasibility_check(np.array([1.0, 2.0, 3.0])).feasible

    def test_every_column_must_change_sign(self):
        g = np.array([[-1.0, 1.0], [1.0, 2.0]])
        assert not feasibility_check(g).feasible


class TestSolveDual:
    def test_mean_zero_rows_give_zero_multiplier(self):
        sol = solve_el_dual(np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_allclose(sol.lam, 0.0, atol=1e-15)
        np.testing.assert_allclose(sol.weights, 1 / 3, atol=1e-15)

    def test_matches_bisection(self):
        g = np.array([-1.0, 0.5, 1.0])
        sol = solve_el_dual(g)
        assert abs(sol.lam[0] - bisect_lambda(g)) < 1e-10

    def test_infeasible(self):
        with pytest.raises(ELInfeasibleError, match="EL infeasible"):
            solve_el_dual(np.array([1.0, 2.0, 3.0]))

    def test_no_columns_gives_uniform_weights(self):
        sol = solve_el_dual(np.zeros((4, 0)))
        np.testing.assert_array_equal(sol.weights, 0.25)

    def test_solution_invariants(self, rng):
        g = _feasible_instance(rng, 30, r=3)
        sol = solve_el_dual(g)
        assert sol.feasible
        assert abs(sol.weights.sum() - 1) < 1e-12
        assert np.max(np.abs(sol.weights @ g)) < 1e-8
        assert np.all(1 + g @ sol.lam > 0)
        assert sol.max_grad < 1e-10

    def test_monotone_ascent(self, rng):
        for _ in range(20):
            g = _feasible_instance(rng, 12, r=2)
            trace = np.array(solve_el_dual(g).objective_trace)
            assert np.all(np.diff(trace) >= -1e-13 * (1 + np.abs(trace[:-1])))

    def test_collinear_columns_are_redundant(self, rng):
        g = _feasible_instance(rng, 15)
        single = solve_el_dual(g)
        doubled = solve_el_dual(np.c_[g, 2.0 * g])
        np.testing.assert_allclose(doubled.weights, single.weights, atol=1e-10)

    def test_near_edge_point_takes_almost_all_weight(self):
        # zero sits next to the hull edge; the solution is still interior
        g = np.array([-1e-6, 1.0, 2.0, 3.0])
        sol = solve_el_dual(g)
        assert sol.weights[0] > 1 - 1e-5
        assert np.all(1 + g * sol.lam[0] >= 1 / (10 * g.size))

    @settings(max_examples=100, deadline=None)
    @given(m=st.integers(3, 10), seed=st.integers(0, 2**32 - 1))
    def test_one_dimensional_oracle(self, m, seed):
        g = _feasible_instance(np.random.default_rng(seed), m)[:, 0]
        assert abs(solve_el_dual(g).lam[0] - bisect_lambda(g)) < 1e-10


class TestDualDerivatives:
    def test_gradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(5):
            g = _feasible_instance(rng, 20, r=3)
            for _ in range(10):
                lam = rng.uniform(-0.2, 0.2, size=3)
                num = np.array([
                    (dual_objective(lam + h * e, g) - dual_objective(lam - h * e, g)) / (2 * h)
                    for e in np.eye(3)
                ])
                ana = dual_gradient(lam, g)
                assert np.max(np.abs(num - ana)) / max(1.0, np.max(np.abs(ana))) < 1e-5

    def test_hessian_negative_semidefinite(self, rng):
        g = _feasible_instance(rng, 20, r=3)
        for _ in range(10):
            lam = rng.uniform(-2, 2, size=3)
            assert np.linalg.eigvalsh(dual_hessian(lam, g)).max() <= 1e-12

    def test_logstar_is_smooth_at_threshold(self):
        g = np.array([[-1.0], [1.0]])
        eps = 0.5
        lam_at = np.array([0.5])  # 1 + lam*(-1) = eps exactly
        for dl in (1e-9, -1e-9):
            lo = dual_objective(lam_at + dl, g, eps)
            assert abs(lo - dual_objective(lam_at, g, eps)) < 1e-8

    def test_estimating_function_zero_at_solution(self, rng):
        g = _feasible_instance(rng, 25, r=2)
        sol = solve_el_dual(g)
        assert np.max(np.abs(estimating_function(sol.lam, g))) < 1e-10


class TestWeights:
    def test_zero_multiplier_is_uniform(self):
        np.testing.assert_allclose(el_weights(np.zeros(1), np.array([1.0, -2.0, 3.0, 0.5])), 0.25)

    def test_constraint_reproduced(self, rng):
        g = _feasible_instance(rng, 40, r=2)
        sol = solve_el_dual(g)
        assert np.max(np.abs(sol.weights @ g)) < 1e-8

    @pytest.mark.parametrize("a", [0.01, -3.0, 250.0])
    def test_rescaling_leaves_weights(self, rng, a):
        g = _feasible_instance(rng, 18)
        base = solve_el_dual(g)
        scaled = solve_el_dual(a * g)
        np.testing.assert_allclose(scaled.weights, base.weights, atol=1e-10)
        np.testing.assert_allclose(scaled.lam * a, base.lam, rtol=1e-8)

    def test_per_column_rescaling(self, rng):
        g = _feasible_instance(rng, 30, r=3)
        scale = np.array([2.0, -0.5, 10.0])
        np.testing.assert_allclose(solve_el_dual(g * scale).weights, solve_el_dual(g).weights,
                                   atol=1e-10)

    def test_nonpositive_denominator_is_an_error(self):
        with pytest.raises(RuntimeError):
            el_weights(np.array([2.0]), np.array([-1.0, 1.0]))


def test_rank_revealing_solve_drops_null_space():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    x, rank = rank_revealing_solve(a, np.array([2.0, 2.0]))
    assert rank == 1
    np.testing.assert_allclose(x, [1.0, 1.0])
