"""The NILE estimator.

For a covariate spline design ``B``, an instrument spline design ``C`` and
penalty weights ``(lambda, gamma, delta)`` the coefficient vector minimizes

    ||Y - B theta||^2 + lambda ||P_delta (Y - B theta)||^2 + gamma theta^T K theta,

with ``P_delta = C (C^T C + delta M)^{-1} C^T``. ``lambda`` is chosen as the
smallest value whose fit passes an instrument-orthogonality test, and the
fitted spline is continued linearly outside the range of the training X.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import penreg
from .data import Dataset
from .ivtests import PenalizedT2, ProjectionT1, TestKind, TestReport
from .penreg import HatSpec, cho_factor_checked
from .splines import SplineBasis, curvature_penalty, design_matrix, eval_f_eta, make_cubic_basis

logger = logging.getLogger(__name__)

MIN_ROWS = 20
FALLBACK_GAMMA_FACTOR = 1e-3


@dataclass(frozen=True)
class NileOptions:
    k: int = 50
    alpha: float = 0.05
    test_kind: TestKind = TestKind.T2
    lambda_cap: float = 1e6
    binary_search_tol: float = 1e-3
    cv_grid: tuple = tuple(penreg.DEFAULT_CV_GRID)
    folds: int = 10
    seed: int = 0
    # Skip the search and use this lambda (0 gives the OLS-spline baseline).
    fixed_lambda: float | None = None
    check_monotonicity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "test_kind", TestKind(self.test_kind))
        object.__setattr__(self, "cv_grid", tuple(float(g) for g in self.cv_grid))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.lambda_cap > 0.0:
            raise ValueError(f"lambda_cap must be positive, got {self.lambda_cap}")
        if self.k < 4:
            raise ValueError(f"k must be at least 4, got {self.k}")
        if not 0.0 < self.binary_search_tol < 1.0:
            raise ValueError(f"binary_search_tol must lie in (0, 1), got {self.binary_search_tol}")
        if not self.cv_grid:
            raise ValueError("cv_grid is empty")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ValueError("fixed_lambda must be nonnegative")


class NileProblem:
    """Assembled matrices for one dataset and fixed ``(gamma, delta)``.

    Every solve along the lambda path reuses the ``k x k`` products computed
    here, so a fit at a new lambda costs one Cholesky factorization.
    """

    def __init__(self, Bmat, Cmat, y, K, M, gamma: float, delta: float):
        self.B = np.asarray(Bmat, dtype=float)
        self.C = np.asarray(Cmat, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.M = np.asarray(M, dtype=float)
        if gamma < 0 or delta < 0:
            raise ValueError("gamma and delta must be nonnegative")
        self.gamma = float(gamma)
        self.delta = float(delta)
        self.hat = HatSpec(self.C, self.M, self.delta)
        ctc = self.hat.gram
        factor = cho_factor_checked(ctc + self.delta * self.M, np.trace(ctc))
        ct = self.C.T
        self.PB = self.C @ linalg.cho_solve(factor, ct @ self.B)
        self.Py = self.C @ linalg.cho_solve(factor, ct @ self.y)
        self.BtB = self.B.T @ self.B
        self.Bty = self.B.T @ self.y
        self.PBtPB = self.PB.T @ self.PB
        self.PBtPy = self.PB.T @ self.Py
        self._btb_trace = float(np.trace(self.BtB))
        self._pb_trace = float(np.trace(self.PBtPB))

    def normal_system(self, lam: float, gamma: float | None = None):
        gamma = self.gamma if gamma is None else gamma
        lhs = self.BtB + lam * self.PBtPB + gamma * self.K
        rhs = self.Bty + lam * self.PBtPy
        return lhs, rhs

    def theta(self, lam: float, gamma: float | None = None) -> np.ndarray:
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        lhs, rhs = self.normal_system(lam, gamma)
        data_trace = self._btb_trace + lam * self._pb_trace
        return linalg.cho_solve(cho_factor_checked(lhs, data_trace), rhs)

    def tsls_theta(self, gamma: float) -> np.ndarray:
        """Minimizer of ``||P_delta (y - B theta)||^2 + gamma theta^T K theta``."""
        return linalg.cho_solve(cho_factor_checked(self.PBtPB + gamma * self.K, self._pb_trace), self.PBtPy)

    def residuals(self, theta) -> np.ndarray:
        return self.y - self.B @ theta

    def smoothed_residuals(self, theta) -> np.ndarray:
        return self.Py - self.PB @ theta

    def tsls_loss(self, theta) -> float:
        r = self.smoothed_residuals(theta)
        return float(r @ r)

    def objective(self, theta, lam: float, gamma: float | None = None) -> float:
        gamma = self.gamma if gamma is None else gamma
        r = self.residuals(theta)
        return float(r @ r) + lam * self.tsls_loss(theta) + gamma * float(theta @ self.K @ theta)

    def make_test(self, kind: TestKind, alpha: float) -> Callable[[np.ndarray], TestReport]:
        """Return ``theta -> TestReport`` for the requested test."""
        kind = TestKind(kind)
        if kind is TestKind.T2:
            t2 = PenalizedT2(self.hat, alpha)

            def run(theta):
                r = self.residuals(theta)
                if not r.any():
                    return _perfect_fit_report(t2.threshold, alpha, kind)
                return t2.from_parts(r, self.smoothed_residuals(theta))

        else:
            t1 = ProjectionT1(self.C, alpha)

            def run(theta):
                r = self.residuals(theta)
                if not r.any():
                    return _perfect_fit_report(t1.threshold, alpha, kind)
                return t1(r)

        return run


def _perfect_fit_report(threshold: float, alpha: float, kind: TestKind) -> TestReport:
    # An exactly zero residual is orthogonal to every instrument.
    return TestReport(0.0, threshold, 0.0 > threshold, alpha, kind)


def fit_theta(Bmat, Cmat, y, lam: float, gamma: float, delta: float, K, M) -> np.ndarray:
    """Closed-form minimizer of the penalized K-class objective.

    Solves ``(B^T B + lam B^T P^2 B + gamma K) theta = B^T y + lam B^T P^2 y``
    where ``P^2`` is the penalized instrument smoother applied twice.
    """
    return NileProblem(Bmat, Cmat, y, K, M, gamma, delta).theta(lam)


@dataclass
class LambdaSearchResult:
    lambda_star: float
    theta: np.ndarray
    report: TestReport
    fallback_used: bool
    n_evaluations: int
    path: list = field(default_factory=list, repr=False)


def lambda_search(problem: NileProblem, test: Callable[[np.ndarray], TestReport], options: NileOptions) -> LambdaSearchResult:
    """Approximate ``inf {lambda >= 0 : test accepts theta(lambda)}``.

    The upper bracket doubles from 1 until the test accepts or
    ``options.lambda_cap`` is passed, then bisection shrinks the bracket to
    ``binary_search_tol`` relative width. Without any accepted lambda the
    TSLS-type fit is returned with ``lambda_star = inf``.
    """
    path = []

    def evaluate(lam):
        theta = problem.theta(lam)
        report = test(theta)
        path.append((lam, report.statistic))
        return theta, report

    theta0, report0 = evaluate(0.0)
    if not report0.reject:
        return LambdaSearchResult(0.0, theta0, report0, False, len(path), path)

    lo, hi = 0.0, 1.0
    hit = None
    while True:
        theta_hi, report_hi = evaluate(hi)
        if not report_hi.reject:
            hit = (hi, theta_hi, report_hi)
            break
        if hi >= options.lambda_cap:
            break
        lo = hi
        hi = min(2.0 * hi, options.lambda_cap)

    if hit is None:
        gamma_small = problem.gamma * FALLBACK_GAMMA_FACTOR
        theta = problem.tsls_theta(gamma_small)
        report = test(theta)
        logger.info("no lambda up to %g accepted; falling back to the TSLS fit", options.lambda_cap)
        return LambdaSearchResult(math.inf, theta, report, True, len(path), path)

    best_lam, best_theta, best_report = hit
    # Bisect (lo rejected, best_lam accepted); the absolute floor stops an
    # endless halving towards an accepted region that touches lambda = 0.
    for _ in range(200):
        if best_lam - lo <= options.binary_search_tol * best_lam or best_lam < 1e-12:
            break
        mid = 0.5 * (lo + best_lam)
        theta_mid, report_mid = evaluate(mid)
        if report_mid.reject:
            lo = mid
        else:
            best_lam, best_theta, best_report = mid, theta_mid, report_mid
    return LambdaSearchResult(best_lam, best_theta, best_report, False, len(path), path)


@dataclass(eq=False)
class NileFit:
    theta: np.ndarray
    basis_B: SplineBasis
    basis_C: SplineBasis
    gamma: float
    delta: float
    lambda_star: float
    fallback_used: bool
    # Test at the coefficient vector that decided lambda_star (before the
    # gamma update), so that it never rejects unless the fallback was used.
    test_report_at_solution: TestReport
    alpha: float = 0.05
    test_kind: TestKind = TestKind.T2
    seed: int = 0
    gamma_cv: float | None = None
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def a(self) -> float:
        return self.basis_B.a

    @property
    def b(self) -> float:
        return self.basis_B.b

    @property
    def k(self) -> int:
        return self.basis_B.k

    def __call__(self, x):
        return predict(self, x)


def predict(fit: NileFit, x):
    """Evaluate the fitted causal function at ``x`` (scalar or array)."""
    return eval_f_eta(fit.basis_B, fit.theta, x)


def _check_data(data: Dataset, options: NileOptions) -> None:
    n = len(data)
    if n < max(MIN_ROWS, options.folds):
        raise ValueError(f"need at least {max(MIN_ROWS, options.folds)} observations for {options.folds}-fold CV, got {n}")
    for name in ("x", "a", "y"):
        col = getattr(data, name)
        if not np.all(np.isfinite(col)):
            raise ValueError(f"column {name} contains non-finite values")
    for name in ("x", "a"):
        col = getattr(data, name)
        if np.ptp(col) == 0.0:
            raise ValueError(f"column {name} is constant; cannot build a spline basis on it")
        n_distinct = len(np.unique(col))
        if n_distinct < options.k:
            raise ValueError(f"column {name} has {n_distinct} distinct values, fewer than k={options.k}")


def rank_diagnostics(problem: NileProblem) -> dict:
    """Condition numbers of the empirical second-moment matrices.

    Large values indicate that the rank conditions needed for consistency
    are close to failing in this sample.
    """
    n = len(problem.y)
    return {
        "cond_BtB": float(np.linalg.cond(problem.BtB / n)),
        "cond_CtC": float(np.linalg.cond(problem.C.T @ problem.C / n)),
        "cond_CtB": float(np.linalg.cond(problem.C.T @ problem.B / n)),
    }


def monotonicity_diagnostics(problem: NileProblem, test, lambdas=None, tol: float = 1e-8) -> dict:
    """Check that the test statistic and TSLS loss weakly decrease in lambda."""
    if lambdas is None:
        lambdas = np.concatenate([[0.0], np.logspace(-3, 4, 19)])
    stats_ = []
    losses = []
    for lam in lambdas:
        theta = problem.theta(lam)
        stats_.append(test(theta).statistic)
        losses.append(problem.tsls_loss(theta))
    stats_ = np.array(stats_)
    losses = np.array(losses)
    stat_jumps = np.diff(stats_)
    loss_jumps = np.diff(losses)
    return {
        "lambda_grid": np.asarray(lambdas, dtype=float).tolist(),
        "statistic_path": stats_.tolist(),
        "statistic_monotone": bool(np.all(stat_jumps <= tol * np.maximum(1.0, np.abs(stats_[:-1])))),
        "tsls_loss_monotone": bool(np.all(loss_jumps <= tol * np.maximum(1.0, losses[:-1]))),
    }


def nile_fit(data: Dataset, options: NileOptions | None = None) -> NileFit:
    """Fit the NILE on ``(X, Y, A)``.

    Steps: bases on ``[min X, max X]`` and ``[min A, max A]``; ``delta`` and
    ``gamma`` by CV of the instrument and covariate smoothers; search for
    ``lambda_star``; inflate ``gamma`` by ``1 + lambda_star``; final solve.
    """
    options = options or NileOptions()
    _check_data(data, options)
    x, y, a = data.x, data.y, data.a

    basis_B = make_cubic_basis(x.min(), x.max(), options.k)
    basis_C = make_cubic_basis(a.min(), a.max(), options.k)
    Bmat = design_matrix(basis_B, x)
    Cmat = design_matrix(basis_C, a)
    K = curvature_penalty(basis_B)
    M = curvature_penalty(basis_C)

    grid = np.array(options.cv_grid)
    delta = penreg.cv_penalty(Cmat, M, y, grid=grid, folds=options.folds, seed=options.seed)
    gamma_cv = penreg.cv_penalty(Bmat, K, y, grid=grid, folds=options.folds, seed=options.seed)

    problem = NileProblem(Bmat, Cmat, y, K, M, gamma_cv, delta)
    test = problem.make_test(options.test_kind, options.alpha)

    if options.fixed_lambda is not None:
        lam = float(options.fixed_lambda)
        theta_star = problem.theta(lam)
        search = LambdaSearchResult(lam, theta_star, test(theta_star), False, 1)
    else:
        search = lambda_search(problem, test, options)

    if search.fallback_used:
        gamma = gamma_cv * FALLBACK_GAMMA_FACTOR
        theta = search.theta
    else:
        gamma = (1.0 + search.lambda_star) * gamma_cv
        theta = problem.theta(search.lambda_star, gamma)

    diagnostics = rank_diagnostics(problem)
    diagnostics["n_test_evaluations"] = search.n_evaluations
    diagnostics["final_statistic"] = test(theta).statistic
    if options.check_monotonicity:
        diagnostics.update(monotonicity_diagnostics(problem, test))

    return NileFit(
        theta=theta,
        basis_B=basis_B,
        basis_C=basis_C,
        gamma=gamma,
        delta=delta,
        lambda_star=search.lambda_star,
        fallback_used=search.fallback_used,
        test_report_at_solution=search.report,
        alpha=options.alpha,
        test_kind=options.test_kind,
        seed=options.seed,
        gamma_cv=gamma_cv,
        diagnostics=diagnostics,
    )
