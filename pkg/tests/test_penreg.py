import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nile.penreg import (
    DEFAULT_CV_GRID,
    HatSpec,
    SingularSystemError,
    cho_factor_checked,
    cv_errors,
    cv_penalty,
    fold_indices,
    hat_apply,
    jittered,
    penalized_solve,
    select_weight,
)
from nile.splines import curvature_penalty, design_matrix, make_cubic_basis


def spline_problem(n=150, k=15, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    basis = make_cubic_basis(x.min(), x.max(), k)
    D = design_matrix(basis, x)
    P = curvature_penalty(basis)
    y = np.sin(2 * x) + 0.2 * rng.normal(size=n)
    return D, P, y


def explicit_hat(D, P, w):
    return D @ np.linalg.solve(D.T @ D + w * P, D.T)


class TestHatOperator:
    @pytest.mark.parametrize("w", [0.0, 1e-3, 1.0, 1e3])
    def test_apply_matches_explicit_matrix(self, w):
        D, P, y = spline_problem()
        np.testing.assert_allclose(hat_apply(HatSpec(D, P, w), y), explicit_hat(D, P, w) @ y, atol=1e-8)

    @pytest.mark.parametrize("w", [0.0, 1e-2, 10.0])
    def test_spectrum_in_unit_interval(self, w):
        D, P, _ = spline_problem(n=80, k=10)
        eig = np.linalg.eigvalsh(0.5 * (explicit_hat(D, P, w) + explicit_hat(D, P, w).T))
        assert eig.min() > -1e-8
        assert eig.max() < 1 + 1e-8
        # rank k, and the two linear directions are never shrunk
        assert np.sum(eig > 1e-8) == 10
        assert np.sum(eig > 1 - 1e-6) >= 2

    def test_smoother_shares_spectrum(self):
        D, P, _ = spline_problem(n=60, k=8)
        S = HatSpec(D, P, 0.3).smoother()
        H = explicit_hat(D, P, 0.3)
        for power in (1, 2, 4):
            assert np.trace(np.linalg.matrix_power(S, power)) == pytest.approx(
                np.trace(np.linalg.matrix_power(H, power)), rel=1e-9
            )

    def test_unpenalized_is_projection(self):
        D, P, _ = spline_problem(n=60, k=8)
        H = explicit_hat(D, P, 0.0)
        np.testing.assert_allclose(H @ H, H, atol=1e-9)

    def test_matrix_argument(self):
        D, P, y = spline_problem()
        spec = HatSpec(D, P, 0.1)
        V = np.column_stack([y, 2 * y])
        out = hat_apply(spec, V)
        np.testing.assert_allclose(out[:, 1], 2 * out[:, 0])

    def test_validation(self):
        D, P, y = spline_problem()
        with pytest.raises(ValueError):
            HatSpec(D, P, -1.0)
        with pytest.raises(ValueError):
            HatSpec(D, P[:-1, :-1], 1.0)
        with pytest.raises(ValueError):
            hat_apply(HatSpec(D, P, 1.0), y[:-1])


class TestPenalizedSolve:
    def test_normal_equation_residual(self):
        D, P, y = spline_problem()
        for w in (0.0, 0.1, 100.0):
            c = penalized_solve(D, P, w, y)
            resid = (D.T @ D + w * P) @ c - D.T @ y
            assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(D.T @ y)

    def test_large_weight_gives_linear_fit(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, 150)
        basis = make_cubic_basis(x.min(), x.max(), 15)
        D, P = design_matrix(basis, x), curvature_penalty(basis)
        y = np.sin(2 * x) + 0.2 * rng.normal(size=150)
        fitted = D @ penalized_solve(D, P, 1e8, y)
        ref = np.polyval(np.polyfit(x, y, 1), x)
        np.testing.assert_allclose(fitted, ref, atol=1e-3)

    def test_jitter_rescues_rank_deficiency(self):
        D = np.ones((10, 3))
        c = penalized_solve(D, np.zeros((3, 3)), 0.0, np.ones(10))
        np.testing.assert_allclose(D @ c, 1.0, atol=1e-6)

    def test_jitter_ignores_penalty_scale(self):
        normal = np.diag([1.0, 1e12])
        with_gram = jittered(normal, gram_trace=2.0)
        assert with_gram[0, 0] - 1.0 == pytest.approx(1e-10)

    def test_indefinite_system_raises(self):
        D, _, y = spline_problem(n=40, k=6)
        with pytest.raises(SingularSystemError, match="condition"):
            penalized_solve(D, -np.eye(6) * 1e6, 1.0, y)

    def test_cholesky_rejects_indefinite(self):
        with pytest.raises(np.linalg.LinAlgError):
            cho_factor_checked(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestCrossValidation:
    def test_folds_partition(self):
        blocks = fold_indices(103, 10, seed=4)
        assert len(blocks) == 10
        flat = np.sort(np.concatenate(blocks))
        np.testing.assert_array_equal(flat, np.arange(103))
        assert {len(b) for b in blocks} <= {10, 11}

    def test_folds_deterministic(self):
        a = fold_indices(50, 5, seed=1)
        b = fold_indices(50, 5, seed=1)
        c = fold_indices(50, 5, seed=2)
        assert all(np.array_equal(u, v) for u, v in zip(a, b))
        assert not all(np.array_equal(u, v) for u, v in zip(a, c))

    def test_fold_validation(self):
        with pytest.raises(ValueError):
            fold_indices(5, 10, 0)
        with pytest.raises(ValueError):
            fold_indices(50, 1, 0)

    def test_errors_match_naive_loop(self):
        D, P, y = spline_problem(n=60, k=8)
        grid = np.array([0.01, 1.0, 100.0])
        got = cv_errors(D, P, y, grid, folds=5, seed=3)
        blocks = fold_indices(60, 5, 3)
        for g, w in enumerate(grid):
            total = 0.0
            for held in blocks:
                mask = np.ones(60, bool)
                mask[held] = False
                c = np.linalg.solve(D[mask].T @ D[mask] + w * P, D[mask].T @ y[mask])
                total += np.sum((y[held] - D[held] @ c) ** 2)
            assert got[g] == pytest.approx(total, rel=1e-9)

    def test_select_weight_ties_go_large(self):
        assert select_weight([1, 2, 3, 4], [5.0, 1.0, 1.0, 3.0]) == 3
        assert select_weight([1, 2, 3], [2.0, 3.0, 4.0]) == 1

    def test_cv_prefers_heavy_smoothing_for_linear_truth(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 200)
        basis = make_cubic_basis(x.min(), x.max(), 30)
        D, P = design_matrix(basis, x), curvature_penalty(basis)
        y = 2 * x + 0.5 * rng.normal(size=200)
        assert cv_penalty(D, P, y, DEFAULT_CV_GRID, 10, 0) >= 1.0

    def test_cv_grid_validation(self):
        D, P, y = spline_problem(n=40, k=6)
        with pytest.raises(ValueError):
            cv_errors(D, P, y, grid=[])
        with pytest.raises(ValueError):
            cv_errors(D, P, y, grid=[-1.0])

    @settings(max_examples=25, deadline=None)
    @given(w1=st.floats(0, 1e3), w2=st.floats(0, 1e3))
    def test_residual_norm_monotone_in_weight(self, w1, w2):
        D, P, y = spline_problem(n=80, k=10)
        lo, hi = sorted((w1, w2))
        r_lo = y - hat_apply(HatSpec(D, P, lo), y)
        r_hi = y - hat_apply(HatSpec(D, P, hi), y)
        assert r_lo @ r_lo <= r_hi @ r_hi * (1 + 1e-9) + 1e-12
