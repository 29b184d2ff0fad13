import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bisect_weights, inverse_normal_bisection, score_root

from conftest import linear_trial
from mdel import FoldPlan, NuisancePredictions, make_fold_plan, validate_dataset
from mdel.estimators import (
    DEGENERATE,
    diff_in_means,
    dim_influence_variance,
    mdel_estimate,
    mdel_report,
    mdel_variance,
    nosplit_el,
    normal_quantile,
    wald_ci,
    wdtt_estimate,
)
from mdel.nuisance import fit_nuisances_crossfit, fit_nuisances_full, spec_for


def _preds(t, c=None, names=("m",)):
    t = np.asarray(t, dtype=float).reshape(len(t), -1)
    c = t if c is None else np.asarray(c, dtype=float).reshape(len(t), -1)
    return NuisancePredictions(t, c, names)


def _crossfit(ds, k=5, models=("lasso",), seed=0):
    plan = make_fold_plan(ds, k, seed)
    return plan, fit_nuisances_crossfit(ds, plan, [spec_for(m, seed=seed) for m in models])


class TestDiffInMeans:
    def test_two_units(self):
        rep = diff_in_means(validate_dataset([1.0, 2.0], [1, 0], np.zeros((2, 1))))
        assert rep.theta_hat == -1.0

    def test_identical_arms(self):
        ds = validate_dataset([1.0, 5.0, 1.0, 5.0], [1, 1, 0, 0], np.zeros((4, 1)))
        assert diff_in_means(ds).theta_hat == 0.0

    def test_standard_error(self, trial):
        y1 = trial.y[trial.d == 1]
        y0 = trial.y[trial.d == 0]
        se = math.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size)
        assert diff_in_means(trial).se == pytest.approx(se, rel=1e-12)


class TestWdtt:
    def test_zero_predictions_average_fold_differences(self, trial):
        plan = make_fold_plan(trial, 3, 1)
        z = np.zeros(trial.n)
        rep = wdtt_estimate(trial, plan, _preds(z))
        dims = []
        for k in range(3):
            fk = plan.fold(k)
            dims.append(trial.y[fk][trial.d[fk] == 1].mean() - trial.y[fk][trial.d[fk] == 0].mean())
        assert rep.theta_hat == pytest.approx(np.mean(dims), abs=1e-12)

    def test_matches_hand_solved_fold_equations(self):
        rng = np.random.default_rng(4)
        d = np.array([1, 0, 1, 0, 1, 1, 0, 0], dtype=float)
        y = rng.standard_normal(8) + 2 * d
        ds = validate_dataset(y, d, rng.standard_normal((8, 2)))
        g1, g0 = rng.standard_normal(8), rng.standard_normal(8)
        plan = FoldPlan(2, np.array([0, 0, 0, 0, 1, 1, 1, 1]))
        rep = wdtt_estimate(ds, plan, _preds(g1, g0))
        roots = [score_root(y[f], d[f], g1[f], g0[f]) for f in (plan.fold(0), plan.fold(1))]
        assert rep.theta_hat == pytest.approx(np.mean(roots), abs=1e-12)

    def test_variance_formula(self):
        rng = np.random.default_rng(9)
        d = np.tile([1.0, 0.0, 1.0, 1.0, 0.0], 4)
        y = rng.standard_normal(20)
        g1, g0 = rng.standard_normal(20), rng.standard_normal(20)
        ds = validate_dataset(y, d, np.zeros((20, 1)))
        plan = FoldPlan(2, np.repeat([0, 1], 10))
        var = 0.0
        for k in range(2):
            f = plan.fold(k)
            s1 = d[f].mean()
            r = y[f] - (1 - s1) * g1[f] - s1 * g0[f]
            t, c = r[d[f] == 1], r[d[f] == 0]
            var += (f.size / 20) ** 2 * (t.var(ddof=1) / t.size + c.var(ddof=1) / c.size)
        assert wdtt_estimate(ds, plan, _preds(g1, g0)).se == pytest.approx(math.sqrt(var), rel=1e-12)

    def test_arm_missing_in_a_fold(self):
        ds = validate_dataset(np.arange(6.0), [1, 1, 1, 0, 0, 0], np.zeros((6, 1)))
        with pytest.raises(ValueError, match="fold 1"):
            wdtt_estimate(ds, FoldPlan(2, np.array([0, 0, 0, 1, 1, 1])), _preds(np.zeros(6)))

    def test_single_model_only(self, trial):
        two = NuisancePredictions(np.zeros((trial.n, 2)), np.zeros((trial.n, 2)), ("a", "b"))
        with pytest.raises(ValueError):
            wdtt_estimate(trial, make_fold_plan(trial, 2, 0), two)


class TestMdel:
    def test_constant_predictions_collapse_to_dim(self, trial):
        plan = make_fold_plan(trial, 5, 0)
        rep = mdel_report(trial, plan, _preds(np.full(trial.n, 3.0), np.full(trial.n, -1.0)))
        dim = diff_in_means(trial)
        assert abs(rep.theta_hat - dim.theta_hat) < 1e-10
        assert abs(rep.se**2 - dim_influence_variance(trial)) < 1e-10
        assert DEGENERATE in rep.warnings

    def test_tiny_instance_against_bisection(self):
        y = np.array([2.0, 0.5, 3.5, -1.0, 1.0, 0.0])
        d = np.array([1, 0, 1, 0, 1, 0], dtype=float)
        ds = validate_dataset(y, d, np.zeros((6, 1)))
        plan = FoldPlan(2, np.array([0, 0, 0, 1, 1, 1]))
        t = np.array([1.2, -0.4, 2.0, 0.3, -0.9, 0.8])
        c = np.array([0.1, 0.7, -1.5, 0.2, 1.1, -0.6])
        fit = mdel_estimate(ds, plan, _preds(t, c))
        expect = {}
        for arm, col in ((1, t), (0, c)):
            rows = d == arm
            _, w = bisect_weights(col[rows] - col.mean())
            expect[arm] = w @ y[rows]
        assert abs(fit.theta1 - expect[1]) < 1e-10
        assert abs(fit.theta0 - expect[0]) < 1e-10
        assert abs(fit.theta - (expect[1] - expect[0])) < 1e-10

    def test_weights_reproduce_xi(self, trial):
        plan, preds = _crossfit(trial, models=("lasso", "rf"))
        fit = mdel_estimate(trial, plan, preds)
        for arm in (1, 0):
            c = fit.constraints[arm]
            raw = preds.arm(arm)[c.rows][:, list(c.active_columns)]
            np.testing.assert_allclose(fit.solutions[arm].weights @ raw,
                                       c.xi_hat[list(c.active_columns)], atol=1e-8)

    @pytest.mark.parametrize("shift", [-40.0, 0.37, 1e3])
    def test_location_equivariance(self, trial, shift):
        plan = make_fold_plan(trial, 4, 2)
        rng = np.random.default_rng(1)
        preds = _preds(trial.x[:, 0] + 0.1 * rng.standard_normal(trial.n),
                       trial.x[:, 1] + 0.1 * rng.standard_normal(trial.n))
        moved_ds = validate_dataset(trial.y + shift, trial.d, trial.x)
        a = mdel_estimate(trial, plan, preds)
        b = mdel_estimate(moved_ds, plan, preds)
        assert abs(b.theta1 - a.theta1 - shift) < 1e-10 * max(1, abs(shift))
        assert abs(b.theta0 - a.theta0 - shift) < 1e-10 * max(1, abs(shift))
        assert abs(b.theta - a.theta) < 1e-10 * max(1, abs(shift))
        assert abs(mdel_variance(moved_ds, b) - mdel_variance(trial, a)) < 1e-10 * max(1, abs(shift))

    def test_variance_positive(self, trial):
        plan, preds = _crossfit(trial, models=("lasso", "scad"))
        assert mdel_variance(trial, mdel_estimate(trial, plan, preds)) > 0

    def test_adjustment_shrinks_the_interval(self):
        ds = linear_trial(n=200, p=4, seed=3)
        plan, preds = _crossfit(ds)
        assert mdel_report(ds, plan, preds).se < diff_in_means(ds).se

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), c1=st.floats(-5, 5), c0=st.floats(-5, 5))
    def test_any_constant_predictions_collapse(self, seed, c1, c0):
        ds = linear_trial(n=30, p=2, seed=seed % 1000)
        plan = make_fold_plan(ds, 3, seed)
        fit = mdel_estimate(ds, plan, _preds(np.full(30, c1), np.full(30, c0)))
        assert abs(fit.theta - diff_in_means(ds).theta_hat) < 1e-10
        assert abs(mdel_variance(ds, fit) - dim_influence_variance(ds)) < 1e-10


class TestNosplit:
    def test_equals_mdel_with_one_fold(self, trial):
        preds = fit_nuisances_full(trial, [spec_for("lasso")])
        a = nosplit_el(trial, preds)
        b = mdel_report(trial, FoldPlan.single(trial.n), preds)
        assert a.theta_hat == b.theta_hat and a.se == b.se
        assert a.method == "nosplit_el" and a.k == 1

    def test_constant_predictions(self, trial):
        rep = nosplit_el(trial, _preds(np.full(trial.n, 2.0)))
        assert abs(rep.theta_hat - diff_in_means(trial).theta_hat) < 1e-10


class TestWald:
    def test_zero_se(self):
        assert wald_ci(1.5, 0.0) == (1.5, 1.5)

    def test_quantile_against_erf_oracle(self):
        lo, hi = wald_ci(0.0, 1.0, 0.95)
        assert abs(hi - 1.959964) < 1e-6 and abs(lo + 1.959964) < 1e-6
        for level in (0.5, 0.8, 0.9, 0.95, 0.99, 0.999):
            assert abs(normal_quantile(level) - inverse_normal_bisection(0.5 + level / 2)) < 1e-9

    @settings(max_examples=50)
    @given(theta=st.floats(-1e3, 1e3), se=st.floats(0, 1e3))
    def test_nesting(self, theta, se):
        lo95, hi95 = wald_ci(theta, se, 0.95)
        lo99, hi99 = wald_ci(theta, se, 0.99)
        assert lo99 <= lo95 <= hi95 <= hi99

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            wald_ci(0.0, -1.0)
        with pytest.raises(ValueError):
            normal_quantile(1.0)


@pytest.mark.slow
def test_standardized_estimates_are_normal():
    from scipy.stats import kstest

    from mdel.simulation import SimulationSpec, monte_carlo_run, true_theta

    spec = SimulationSpec("sparse", 400, 20, reps=1000, estimators=("mdel:lasso",), seed=2024)
    records, _ = monte_carlo_run(spec)
    theta = true_theta(spec)
    z = np.array([(r.estimate - theta) / r.se for r in records if not r.failed])
    assert z.size == 1000
    assert kstest(z, "norm").pvalue > 0.01
