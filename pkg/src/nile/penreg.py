"""Penalized least squares, smoother ("hat") operators and k-fold CV.

A smoother ``D (D^T D + w P)^{-1} D^T`` is never formed as an ``n x n``
matrix; everything goes through a Cholesky factor of the ``k x k`` normal
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

JITTER = 1e-10
DEFAULT_CV_GRID = np.logspace(-4, 4, 25)


class SingularSystemError(np.linalg.LinAlgError):
    """Normal matrix could not be factorized even after ridge jitter."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


def jittered(normal: np.ndarray, gram_trace: float | None = None) -> np.ndarray:
    """Add ``1e-10 * gram_trace / k`` to the diagonal.

    ``gram_trace`` is the trace of the unpenalized ``design^T design``, so
    the jitter does not grow with the penalty weight. Without it the trace
    of ``normal`` itself is used.
    """
    k = normal.shape[0]
    scale = (np.trace(normal) if gram_trace is None else gram_trace) / k
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    return normal + JITTER * scale * np.eye(k)


def cho_factor_checked(normal: np.ndarray, gram_trace: float | None = None):
    """Cholesky factor of the jittered symmetric matrix ``normal``."""
    sym = jittered(0.5 * (normal + normal.T), gram_trace)
    try:
        factor = linalg.cho_factor(sym, lower=False, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        raise SingularSystemError("normal matrix is not positive definite", np.linalg.cond(sym))
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= np.finfo(float).eps * diag.max():
        raise SingularSystemError("normal matrix is numerically singular", (diag.max() / diag.min()) ** 2)
    return factor


@dataclass(frozen=True, eq=False)
class HatSpec:
    """Penalized smoother onto the columns of ``design``.

    ``weight`` plays the role of delta for the instrument smoother and of
    gamma for the covariate smoother.
    """

    design: np.ndarray
    penalty: np.ndarray
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        n_col = self.design.shape[1]
        if self.penalty.shape != (n_col, n_col):
            raise ValueError(
                f"penalty shape {self.penalty.shape} does not match design with {n_col} columns"
            )

    @property
    def gram(self) -> np.ndarray:
        return self.design.T @ self.design

    def factor(self):
        gram = self.gram
        return cho_factor_checked(gram + self.weight * self.penalty, np.trace(gram))

    def smoother(self) -> np.ndarray:
        """The ``k x k`` matrix ``S = (D^T D + w P)^{-1} D^T D``.

        ``S`` shares its nonzero spectrum with the hat operator, so traces
        of powers of the hat operator equal traces of powers of ``S``.
        """
        return linalg.cho_solve(self.factor(), self.gram)


def hat_apply(spec: HatSpec, v) -> np.ndarray:
    """``design (design^T design + weight penalty)^{-1} design^T v``.

    ``v`` may be a vector or a matrix whose columns are smoothed
    independently.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != spec.design.shape[0]:
        raise ValueError(f"v has {v.shape[0]} rows, design has {spec.design.shape[0]}")
    coef = linalg.cho_solve(spec.factor(), spec.design.T @ v)
    return spec.design @ coef


def penalized_solve(design, penalty, weight: float, y) -> np.ndarray:
    """Minimize ``||y - design c||^2 + weight c^T penalty c`` over ``c``."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if weight < 0:
        raise ValueError(f"weight must be nonnegative, got {weight}")
    gram = design.T @ design
    normal = gram + weight * np.asarray(penalty, dtype=float)
    return linalg.cho_solve(cho_factor_checked(normal, np.trace(gram)), design.T @ y)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(n)`` with ``seed`` and cut it into contiguous blocks."""
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} nonempty folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def cv_errors(design, penalty, y, grid=DEFAULT_CV_GRID, folds: int = 10, seed: int = 0) -> np.ndarray:
    """Total held-out squared error for every weight in ``grid``.

    One shuffled partition is shared by all grid values. The returned
    array is aligned with ``grid``.
    """
    design = np.asarray(design, dtype=float)
    penalty = np.asarray(penalty, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("CV grid is empty")
    if np.any(grid < 0):
        raise ValueError("CV grid values must be nonnegative")
    blocks = fold_indices(len(y), folds, seed)

    errors = np.zeros(grid.size)
    for held_out in blocks:
        train = np.ones(len(y), dtype=bool)
        train[held_out] = False
        d_train = design[train]
        gram = d_train.T @ d_train
        gram_trace = np.trace(gram)
        rhs = d_train.T @ y[train]
        d_test = design[held_out]
        for g, weight in enumerate(grid):
            coef = linalg.cho_solve(cho_factor_checked(gram + weight * penalty, gram_trace), rhs)
            resid = y[held_out] - d_test @ coef
            errors[g] += resid @ resid
    return errors


def select_weight(grid, errors, rtol: float = 1e-10) -> float:
    """Grid value with the smallest CV error, ties going to the larger weight."""
    grid = np.asarray(grid, dtype=float)
    errors = np.asarray(errors, dtype=float)
    best = errors.min()
    tied = errors <= best + rtol * abs(best)
    return float(grid[tied].max())


def cv_penalty(design, penalty, y, grid=DEFAULT_CV_GRID, folds: int = 10, seed: int = 0) -> float:
    """Penalty weight minimizing the ``folds``-fold out-of-sample error."""
    errors = cv_errors(design, penalty, y, grid=grid, folds=folds, seed=seed)
    return select_weight(grid, errors)
