"""Clamped cubic B-spline bases, curvature penalties and the linearly
extrapolating spline evaluator.

Basis functions are evaluated with the Cox-de Boor recursion. Derivatives
use the usual degree-lowering identity

    B'_{j,p}(x) = p / (t_{j+p} - t_j) B_{j,p-1}(x)
                - p / (t_{j+p+1} - t_{j+1}) B_{j+1,p-1}(x),

with the convention 0/0 = 0 for repeated knots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGREE = 3

# 2-point Gauss-Legendre rule on [-1, 1]; exact for cubics.
_GL_NODES = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GL_WEIGHTS = np.array([1.0, 1.0])


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped cubic B-spline basis with ``k`` functions on ``[a, b]``.

    The knot vector repeats ``a`` and ``b`` four times each and places
    ``k - 4`` equidistant interior knots in between.
    """

    a: float
    b: float
    k: int
    knots: np.ndarray = field(repr=False)
    degree: int = DEGREE

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[DEGREE + 1 : -(DEGREE + 1)]


def make_cubic_basis(a: float, b: float, k: int) -> SplineBasis:
    a = float(a)
    b = float(b)
    if not np.isfinite(a) or not np.isfinite(b) or not a < b:
        raise ValueError(f"need a < b, got a={a!r}, b={b!r}")
    if int(k) != k or k < DEGREE + 1:
        raise ValueError(f"a cubic basis needs k >= 4 functions, got k={k!r}")
    k = int(k)
    n_interior = k - DEGREE - 1
    interior = np.linspace(a, b, n_interior + 2)[1:-1]
    knots = np.concatenate([np.full(DEGREE + 1, a), interior, np.full(DEGREE + 1, b)])
    knots.setflags(write=False)
    return SplineBasis(a=a, b=b, k=k, knots=knots)


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den > 0.0 else 0.0


def _degree0(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Indicator matrix of the half-open knot spans containing ``x``.

    The right end of the knot vector belongs to the last non-empty span so
    that the basis is right-continuous up to and including ``b``.
    """
    n_spans = len(knots) - 1
    out = np.zeros((x.size, n_spans))
    left = knots[:-1]
    right = knots[1:]
    inside = (x[:, None] >= left[None, :]) & (x[:, None] < right[None, :])
    out[inside] = 1.0
    last = np.flatnonzero(right > left)[-1]
    out[x == knots[-1], last] = 1.0
    return out


def bspline_design(knots: np.ndarray, x, degree: int = DEGREE, deriv: int = 0) -> np.ndarray:
    """Evaluate every B-spline of ``degree`` on ``knots`` (or a derivative).

    Returns an array of shape ``(len(x), len(knots) - degree - 1)``. Points
    outside ``[knots[0], knots[-1]]`` evaluate to zero.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if deriv < 0 or deriv > degree:
        raise ValueError(f"derivative order must be in [0, {degree}], got {deriv}")

    levels = [_degree0(knots, x)]
    for p in range(1, degree - deriv + 1):
        prev = levels[-1]
        n_fun = len(knots) - p - 1
        cur = np.zeros((x.size, n_fun))
        for j in range(n_fun):
            w_left = _safe_ratio(1.0, knots[j + p] - knots[j])
            w_right = _safe_ratio(1.0, knots[j + p + 1] - knots[j + 1])
            if w_left:
                cur[:, j] += (x - knots[j]) * w_left * prev[:, j]
            if w_right:
                cur[:, j] += (knots[j + p + 1] - x) * w_right * prev[:, j + 1]
        levels.append(cur)

    values = levels[-1]
    for p in range(degree - deriv + 1, degree + 1):
        n_fun = len(knots) - p - 1
        cur = np.zeros((x.size, n_fun))
        for j in range(n_fun):
            w_left = _safe_ratio(p, knots[j + p] - knots[j])
            w_right = _safe_ratio(p, knots[j + p + 1] - knots[j + 1])
            cur[:, j] = w_left * values[:, j] - w_right * values[:, j + 1]
        values = cur
    return values


def design_matrix(basis: SplineBasis, x, deriv_order: int = 0) -> np.ndarray:
    """Rows ``B^(deriv_order)(x_i)`` for every ``x_i`` in ``[a, b]``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if deriv_order not in (0, 1, 2):
        raise ValueError(f"deriv_order must be 0, 1 or 2, got {deriv_order!r}")
    outside = (x < basis.a) | (x > basis.b) | ~np.isfinite(x)
    if outside.any():
        bad = x[outside][0]
        raise ValueError(
            f"x={bad!r} lies outside [{basis.a!r}, {basis.b!r}]; "
            "use eval_f_eta for extrapolation"
        )
    return bspline_design(basis.knots, x, basis.degree, deriv_order)


def eval_basis(basis: SplineBasis, x: float, deriv_order: int = 0) -> np.ndarray:
    """Vector ``(B_1^(d)(x), ..., B_k^(d)(x))`` at a single point."""
    return design_matrix(basis, [x], deriv_order)[0]


def curvature_penalty(basis: SplineBasis) -> np.ndarray:
    """Gram matrix of second derivatives, ``K_ij = int_a^b B_i'' B_j'' dx``.

    Second derivatives are linear on each knot span, so a 2-point
    Gauss-Legendre rule per span integrates the products exactly.
    """
    breaks = np.unique(basis.knots)
    left, right = breaks[:-1], breaks[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    d2 = bspline_design(basis.knots, nodes, basis.degree, 2)
    penalty = d2.T @ (weights[:, None] * d2)
    return 0.5 * (penalty + penalty.T)


def eval_f_eta(basis: SplineBasis, theta, x):
    """Spline ``B(x)^T theta`` on ``[a, b]``, continued linearly outside.

    Left of ``a`` the continuation is the tangent line at ``a``; right of
    ``b`` it is the tangent line at ``b``. Accepts a scalar or an array of
    points and returns the same shape.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.k,):
        raise ValueError(f"theta must have length {basis.k}, got shape {theta.shape}")
    x_arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x_arr).ravel()
    out = np.empty_like(flat)

    ends = np.array([basis.a, basis.b])
    end_vals = bspline_design(basis.knots, ends, basis.degree, 0) @ theta
    end_slopes = bspline_design(basis.knots, ends, basis.degree, 1) @ theta

    lo = flat < basis.a
    hi = flat > basis.b
    mid = ~(lo | hi)
    out[lo] = end_vals[0] + end_slopes[0] * (flat[lo] - basis.a)
    out[hi] = end_vals[1] + end_slopes[1] * (flat[hi] - basis.b)
    if mid.any():
        out[mid] = bspline_design(basis.knots, flat[mid], basis.degree, 0) @ theta
    if x_arr.ndim == 0:
        return float(out[0])
    return out.reshape(x_arr.shape)
