"""Tests of the instrument-orthogonality hypothesis E[C(A)(Y - B(X)^T theta)] = 0.

``T1`` compares the share of the residual explained by the instrument
columns with a chi-square quantile. ``T2`` standardizes the squared norm of
the penalized instrument fit of the residual and compares it with a normal
quantile.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .penreg import HatSpec, cho_factor_checked


class TestKind(str, enum.Enum):
    T1 = "t1"
    T2 = "t2"

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TestReport:
    statistic: float
    threshold: float
    reject: bool
    alpha: float
    kind: TestKind

    __test__ = False


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def t1_threshold(k: int, alpha: float) -> float:
    return float(stats.chi2.ppf(1.0 - alpha, df=k))


def t2_threshold(alpha: float) -> float:
    return float(stats.norm.ppf(1.0 - alpha))


class ProjectionT1:
    """``T1`` with the projection onto the instrument columns precomputed."""

    def __init__(self, instrument_design, alpha: float = 0.05):
        _check_alpha(alpha)
        design = np.asarray(instrument_design, dtype=float)
        # Thin QR gives an orthonormal basis of the column space.
        q, r = np.linalg.qr(design)
        diag = np.abs(np.diag(r))
        if diag.min() <= 1e-10 * diag.max():
            raise ValueError("instrument design is not of full column rank")
        self.q = q
        self.n, self.k = design.shape
        self.alpha = alpha
        self.threshold = t1_threshold(self.k, alpha)

    def explained(self, residuals: np.ndarray) -> float:
        proj = self.q.T @ residuals
        return float(proj @ proj)

    def __call__(self, residuals) -> TestReport:
        residuals = np.asarray(residuals, dtype=float)
        total = float(residuals @ residuals)
        if total == 0.0:
            raise ValueError("T1 is undefined for an identically zero residual vector")
        stat = self.n * self.explained(residuals) / total
        return TestReport(stat, self.threshold, stat > self.threshold, self.alpha, TestKind.T1)


def t1_statistic(residuals, instrument_design, alpha: float = 0.05) -> TestReport:
    """``n ||P r||^2 / ||r||^2`` with ``P`` the unpenalized projection."""
    return ProjectionT1(instrument_design, alpha)(residuals)


class PenalizedT2:
    """``T2`` with the penalized instrument smoother precomputed.

    The centering and scaling constants are ``c_n = tr(P^2)`` and
    ``d_n = sqrt(2 tr(P^4))``, the mean and standard deviation of
    ``||P e||^2`` for ``e`` with i.i.d. unit-variance Gaussian entries.
    """

    def __init__(self, hat: HatSpec, alpha: float = 0.05):
        _check_alpha(alpha)
        self.hat = hat
        self.n = hat.design.shape[0]
        if self.n < 2:
            raise ValueError("T2 needs at least two observations")
        self.alpha = alpha
        self.threshold = t2_threshold(alpha)
        gram = hat.gram
        self._factor = cho_factor_checked(gram + hat.weight * hat.penalty, np.trace(gram))
        smoother = linalg.cho_solve(self._factor, gram)
        s2 = smoother @ smoother
        self.c_n = float(np.trace(s2))
        self.d_n = float(np.sqrt(2.0 * np.trace(s2 @ s2)))
        if not self.d_n > 0.0:
            raise ValueError("T2 scale d_n is zero")

    def smooth(self, v: np.ndarray) -> np.ndarray:
        return self.hat.design @ linalg.cho_solve(self._factor, self.hat.design.T @ v)

    def from_parts(self, residuals: np.ndarray, smoothed: np.ndarray) -> TestReport:
        """Statistic given the residual ``r`` and its smoothed version ``P r``."""
        fitted_norm = float(smoothed @ smoothed)
        rest = residuals - smoothed
        sigma2 = float(rest @ rest) / (self.n - 1)
        if sigma2 == 0.0:
            raise ValueError("T2 is undefined: estimated residual variance is zero")
        stat = (fitted_norm - sigma2 * self.c_n) / (sigma2 * self.d_n)
        return TestReport(stat, self.threshold, stat > self.threshold, self.alpha, TestKind.T2)

    def __call__(self, residuals) -> TestReport:
        residuals = np.asarray(residuals, dtype=float)
        if not residuals.any():
            raise ValueError("T2 is undefined for an identically zero residual vector")
        return self.from_parts(residuals, self.smooth(residuals))


def t2_statistic(y, fitted, hat: HatSpec, alpha: float = 0.05) -> TestReport:
    """Standardized ``||P_delta r||^2`` for the residual ``r = y - fitted``."""
    residuals = np.asarray(y, dtype=float) - np.asarray(fitted, dtype=float)
    return PenalizedT2(hat, alpha)(residuals)
