import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nile.data import Dataset
from nile.estimator import (
    NileOptions,
    NileProblem,
    fit_theta,
    lambda_search,
    monotonicity_diagnostics,
    nile_fit,
    predict,
)
from nile.ivtests import TestKind
from nile.scm import make_model, sample_data
from nile.splines import curvature_penalty, design_matrix, make_cubic_basis

STRONG = (math.sqrt(1 / 3), math.sqrt(2 / 3), 0.0)
NO_CONF = (math.sqrt(2 / 3), 0.0, math.sqrt(1 / 3))


def simulated(alphas=STRONG, n=200, seed=0):
    rng = np.random.default_rng(seed)
    model = make_model(alphas, rng)
    return model, sample_data(model, n, rng)


def problem_for(data, k=12, gamma=0.01, delta=0.05):
    bb = make_cubic_basis(data.x.min(), data.x.max(), k)
    bc = make_cubic_basis(data.a.min(), data.a.max(), k)
    return NileProblem(
        design_matrix(bb, data.x), design_matrix(bc, data.a), data.y, curvature_penalty(bb), curvature_penalty(bc), gamma, delta
    )


class TestNormalEquations:
    @pytest.mark.parametrize("lam", [0.0, 0.5, 10.0, 1e4])
    def test_solution_satisfies_normal_equations(self, lam):
        _, data = simulated()
        pr = problem_for(data)
        theta = pr.theta(lam)
        H = pr.C @ np.linalg.solve(pr.C.T @ pr.C + pr.delta * pr.M, pr.C.T)
        PB, Py = H @ pr.B, H @ pr.y
        lhs = pr.B.T @ pr.B + lam * PB.T @ PB + pr.gamma * pr.K
        rhs = pr.B.T @ pr.y + lam * PB.T @ Py
        assert np.linalg.norm(lhs @ theta - rhs) <= 1e-7 * np.linalg.norm(rhs)

    def test_objective_is_minimized(self):
        _, data = simulated()
        pr = problem_for(data)
        theta = pr.theta(2.0)
        best = pr.objective(theta, 2.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            assert pr.objective(theta + 1e-3 * rng.normal(size=theta.size), 2.0) >= best

    def test_fit_theta_wrapper(self):
        _, data = simulated()
        pr = problem_for(data)
        np.testing.assert_allclose(
            fit_theta(pr.B, pr.C, pr.y, 3.0, pr.gamma, pr.delta, pr.K, pr.M), pr.theta(3.0), rtol=1e-12
        )

    def test_negative_lambda(self):
        _, data = simulated()
        with pytest.raises(ValueError):
            problem_for(data).theta(-1.0)

    def test_large_lambda_approaches_tsls(self):
        _, data = simulated()
        pr = problem_for(data)
        # the TSLS loss is driven towards its (near zero) unpenalized minimum
        floor = pr.tsls_loss(pr.tsls_theta(0.0))
        assert pr.tsls_loss(pr.theta(1e7)) <= floor + 1e-4 * pr.tsls_loss(pr.theta(0.0))


class TestMonotonicity:
    def test_losses_along_lambda_path(self):
        _, data = simulated()
        pr = problem_for(data)
        lams = [0.0, 0.1, 1.0, 10.0, 100.0]
        ols = []
        tsls = []
        for lam in lams:
            th = pr.theta(lam)
            r = pr.residuals(th)
            ols.append(r @ r + pr.gamma * th @ pr.K @ th)
            tsls.append(pr.tsls_loss(th))
        assert np.all(np.diff(tsls) <= 1e-9 * max(tsls))
        assert np.all(np.diff(ols) >= -1e-9 * max(ols))

    def test_diagnostics_report_monotone_paths(self):
        _, data = simulated()
        pr = problem_for(data)
        diag = monotonicity_diagnostics(pr, pr.make_test(TestKind.T2, 0.05))
        assert diag["tsls_loss_monotone"]
        assert len(diag["statistic_path"]) == len(diag["lambda_grid"])

    @settings(max_examples=15, deadline=None)
    @given(l1=st.floats(0, 1e3), l2=st.floats(0, 1e3))
    def test_tsls_loss_nonincreasing_property(self, l1, l2):
        _, data = simulated(seed=5)
        pr = problem_for(data)
        lo, hi = sorted((l1, l2))
        assert pr.tsls_loss(pr.theta(hi)) <= pr.tsls_loss(pr.theta(lo)) * (1 + 1e-8) + 1e-12


class TestLambdaSearch:
    def test_accepts_and_is_near_minimal(self):
        _, data = simulated()
        pr = problem_for(data)
        opts = NileOptions(k=12)
        test = pr.make_test(TestKind.T2, 0.05)
        res = lambda_search(pr, test, opts)
        assert not res.fallback_used
        assert not res.report.reject
        if res.lambda_star > 0:
            below = res.lambda_star * (1 - 2 * opts.binary_search_tol)
            assert test(pr.theta(below)).reject

    def test_zero_when_test_accepts_ols(self):
        _, data = simulated(NO_CONF, seed=3)
        pr = problem_for(data)
        test = pr.make_test(TestKind.T2, 0.05)
        if test(pr.theta(0.0)).reject:
            pytest.skip("OLS rejected for this draw")
        assert lambda_search(pr, test, NileOptions(k=12)).lambda_star == 0.0

    def test_fallback_when_nothing_accepts(self):
        _, data = simulated()
        pr = problem_for(data)

        def always_reject(theta):
            from nile.ivtests import TestReport

            return TestReport(10.0, 1.0, True, 0.05, TestKind.T2)

        res = lambda_search(pr, always_reject, NileOptions(k=12, lambda_cap=64.0))
        assert res.fallback_used
        assert math.isinf(res.lambda_star)
        np.testing.assert_allclose(res.theta, pr.tsls_theta(pr.gamma * 1e-3))
        # 0, then 1, 2, 4, ..., 64
        assert res.n_evaluations == 8

    def test_zero_residual_counts_as_accept(self):
        _, data = simulated()
        pr = problem_for(data)
        theta = np.linalg.lstsq(pr.B, pr.y, rcond=None)[0]
        pr.y = pr.B @ theta
        for kind in TestKind:
            rep = pr.make_test(kind, 0.05)(theta)
            assert rep.statistic == 0.0 and not rep.reject


class TestNileFit:
    def test_fit_fields(self):
        _, data = simulated()
        fit = nile_fit(data, NileOptions(k=20, seed=1))
        assert fit.k == 20
        assert fit.a == data.x.min() and fit.b == data.x.max()
        assert fit.gamma == pytest.approx((1 + fit.lambda_star) * fit.gamma_cv)
        assert not fit.test_report_at_solution.reject
        assert fit.delta in NileOptions().cv_grid
        assert "final_statistic" in fit.diagnostics

    def test_deterministic(self):
        _, data = simulated()
        f1 = nile_fit(data, NileOptions(k=20, seed=4))
        f2 = nile_fit(data, NileOptions(k=20, seed=4))
        np.testing.assert_array_equal(f1.theta, f2.theta)
        assert f1.lambda_star == f2.lambda_star

    def test_fixed_lambda_zero_is_ols_spline(self):
        _, data = simulated()
        fit = nile_fit(data, NileOptions(k=20, fixed_lambda=0.0))
        assert fit.lambda_star == 0.0
        pr = problem_for(data, k=20, gamma=fit.gamma_cv, delta=fit.delta)
        np.testing.assert_allclose(fit.theta, pr.theta(0.0), rtol=1e-10, atol=1e-12)

    def test_confounding_raises_lambda(self):
        _, conf = simulated(STRONG, seed=2)
        fit = nile_fit(conf, NileOptions(k=20))
        assert fit.lambda_star > 0.0

    def test_t1_variant(self):
        _, data = simulated()
        fit = nile_fit(data, NileOptions(k=20, test_kind="t1"))
        assert fit.test_kind is TestKind.T1
        assert fit.test_report_at_solution.kind is TestKind.T1

    def test_predict_extrapolates_linearly(self):
        _, data = simulated()
        fit = nile_fit(data, NileOptions(k=20))
        far = np.array([fit.b + 1, fit.b + 2, fit.b + 3])
        vals = predict(fit, far)
        assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0], rel=1e-10)
        assert fit(0.0) == predict(fit, 0.0)

    @pytest.mark.parametrize(
        "data,match",
        [
            (Dataset(np.ones(50), np.arange(50.0), np.arange(50.0)), "constant"),
            (Dataset(np.arange(10.0), np.arange(10.0), np.arange(10.0)), "at least"),
            (Dataset(np.arange(50.0) % 5, np.arange(50.0), np.arange(50.0)), "distinct"),
            (Dataset(np.r_[np.nan, np.arange(49.0)], np.arange(50.0), np.arange(50.0)), "non-finite"),
        ],
    )
    def test_input_validation(self, data, match):
        with pytest.raises(ValueError, match=match):
            nile_fit(data, NileOptions(k=10))

    @pytest.mark.parametrize(
        "kwargs", [dict(alpha=0.0), dict(alpha=1.5), dict(k=3), dict(lambda_cap=0.0), dict(cv_grid=()), dict(fixed_lambda=-1.0)]
    )
    def test_option_validation(self, kwargs):
        with pytest.raises(ValueError):
            NileOptions(**kwargs)
