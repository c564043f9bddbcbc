"""Simulation SCMs with uniform noise and random natural-spline causal functions.

The data model is

    A := e_A,  H := e_H,  X := alpha_A A + alpha_H H + alpha_eps e_X,
    Y := f(X) + 0.3 H + 0.2 e_Y,

with independent Uniform(-1, 1) noise terms and unit-norm alphas, so that
Var(X) = 1/3 in every configuration.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .splines import bspline_design

UNIFORM_VAR = 1.0 / 3.0
H_IN_Y = 0.3
EPS_IN_Y = 0.2
# E[xi_Y^2] for xi_Y = 0.3 H + 0.2 e_Y, the optimal worst-case risk.
NOISE_VAR = (H_IN_Y**2 + EPS_IN_Y**2) * UNIFORM_VAR

N_KNOTS = 5
QUANTILE_SAMPLES = 1_000_000
QUANTILE_SEED = 20_201


class FnKind(str, enum.Enum):
    NATURAL_SPLINE = "natural_spline"
    CURVED_TAILS = "spline_with_curved_tails"


class InterventionKind(str, enum.Enum):
    HARD_ON_X = "hard_on_X"
    SHIFT_ON_X = "shift_on_X"
    HARD_ON_A = "hard_on_A"
    CONFOUNDING_SCALE = "confounding_scale"


@dataclass(frozen=True)
class InterventionSpec:
    kind: InterventionKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", InterventionKind(self.kind))
        if self.kind is InterventionKind.CONFOUNDING_SCALE and not self.value > 0:
            raise ValueError("confounding_scale interventions need a positive value")


def natural_spline_design(knots, x, deriv: int = 0) -> np.ndarray:
    """Natural cubic spline basis without intercept on the given knots.

    Built from the clamped cubic B-splines on the knots by dropping the
    first function and restricting to the subspace with zero second
    derivative at both boundary knots. For ``m`` knots this leaves ``m - 1``
    functions, all vanishing at the left boundary knot. Outside the boundary
    knots the functions continue linearly.
    """
    knots = np.asarray(knots, dtype=float)
    lo, hi = knots[0], knots[-1]
    full = np.concatenate([[lo] * 3, knots, [hi] * 3])
    proj = _constraint_complement(tuple(knots))

    x = np.atleast_1d(np.asarray(x, dtype=float))
    inside = np.clip(x, lo, hi)
    if deriv == 0:
        vals = bspline_design(full, inside, 3, 0)[:, 1:] @ proj
        ends = bspline_design(full, [lo, hi], 3, 0)[:, 1:] @ proj
        slopes = bspline_design(full, [lo, hi], 3, 1)[:, 1:] @ proj
        below = x < lo
        above = x > hi
        vals[below] = ends[0] + (x[below] - lo)[:, None] * slopes[0]
        vals[above] = ends[1] + (x[above] - hi)[:, None] * slopes[1]
        return vals
    if deriv == 1:
        return bspline_design(full, inside, 3, 1)[:, 1:] @ proj
    if deriv == 2:
        vals = bspline_design(full, inside, 3, 2)[:, 1:] @ proj
        vals[(x < lo) | (x > hi)] = 0.0
        return vals
    raise ValueError(f"deriv must be 0, 1 or 2, got {deriv}")


@functools.lru_cache(maxsize=64)
def _constraint_complement(knots: tuple) -> np.ndarray:
    knots = np.array(knots)
    full = np.concatenate([[knots[0]] * 3, knots, [knots[-1]] * 3])
    const = bspline_design(full, [knots[0], knots[-1]], 3, 2)[:, 1:]
    q, _ = np.linalg.qr(const.T, mode="complete")
    return q[:, const.shape[0]:]


@dataclass(frozen=True, eq=False)
class CausalFn:
    """``sum_i beta_i N_i(x)`` plus optional quadratic tails.

    ``N_i`` are natural cubic splines on ``knots``; the tails add
    ``k1/2 ((x - q_min)_-)^2 + k2/2 ((x - q_max)_+)^2``.
    """

    kind: FnKind
    knots: np.ndarray
    coefficients: np.ndarray
    q_min: float
    q_max: float
    tail_curvatures: tuple = (0.0, 0.0)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x_arr).ravel()
        out = natural_spline_design(self.knots, flat) @ self.coefficients
        k1, k2 = self.tail_curvatures
        if k1 or k2:
            left = np.minimum(flat - self.q_min, 0.0)
            right = np.maximum(flat - self.q_max, 0.0)
            out = out + 0.5 * k1 * left**2 + 0.5 * k2 * right**2
        return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)

    def derivative(self, x):
        flat = np.atleast_1d(np.asarray(x, dtype=float))
        out = natural_spline_design(self.knots, flat, 1) @ self.coefficients
        k1, k2 = self.tail_curvatures
        out = out + k1 * np.minimum(flat - self.q_min, 0.0) + k2 * np.maximum(flat - self.q_max, 0.0)
        return out


def _unit_norm(alphas) -> tuple:
    alphas = tuple(float(v) for v in alphas)
    if len(alphas) != 3 or min(alphas) < 0:
        raise ValueError("alphas must be three nonnegative numbers (alpha_A, alpha_H, alpha_eps)")
    if abs(sum(v * v for v in alphas) - 1.0) > 1e-10:
        raise ValueError(f"alphas must satisfy alpha_A^2 + alpha_H^2 + alpha_eps^2 = 1, got {alphas}")
    return alphas


@functools.lru_cache(maxsize=32)
def quantile_range(alphas: tuple) -> tuple:
    """5% and 95% quantiles of X, by a fixed-seed Monte Carlo sample."""
    alpha_a, alpha_h, alpha_e = _unit_norm(alphas)
    rng = np.random.default_rng(QUANTILE_SEED)
    noise = rng.uniform(-1.0, 1.0, size=(QUANTILE_SAMPLES, 3))
    x = noise @ np.array([alpha_a, alpha_h, alpha_e])
    q_min, q_max = np.quantile(x, [0.05, 0.95])
    return float(q_min), float(q_max)


def sample_causal_fn(rng: np.random.Generator, alphas) -> CausalFn:
    """Random natural spline with 5 equidistant knots over the 90% range of X."""
    q_min, q_max = quantile_range(_unit_norm(alphas))
    knots = np.linspace(q_min, q_max, N_KNOTS)
    coef = rng.uniform(-1.0, 1.0, size=N_KNOTS - 1)
    return CausalFn(FnKind.NATURAL_SPLINE, knots, coef, q_min, q_max)


def curvature_violation(base: CausalFn, kappa: float, rng: np.random.Generator) -> CausalFn:
    """Add tail curvatures drawn from Uniform(-kappa, kappa)."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    k1, k2 = rng.uniform(-kappa, kappa, size=2) if kappa > 0 else (0.0, 0.0)
    return CausalFn(
        FnKind.CURVED_TAILS,
        base.knots,
        base.coefficients,
        base.q_min,
        base.q_max,
        (float(k1), float(k2)),
    )


@dataclass(frozen=True, eq=False)
class ScmModel:
    alpha_A: float
    alpha_H: float
    alpha_eps: float
    causal_fn: CausalFn = field(repr=False)
    noise_scale_H_in_Y: float = H_IN_Y
    noise_scale_eps_Y: float = EPS_IN_Y

    def __post_init__(self):
        _unit_norm(self.alphas)

    @property
    def alphas(self) -> tuple:
        return (self.alpha_A, self.alpha_H, self.alpha_eps)

    @property
    def noise_var(self) -> float:
        return (self.noise_scale_H_in_Y**2 + self.noise_scale_eps_Y**2) * UNIFORM_VAR


def _noise(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return rng.uniform(-1.0, 1.0, size=(n, 4))


def _finish(model: ScmModel, a, h, x, eps_y, expose_latent: bool) -> Dataset:
    y = model.causal_fn(x) + model.noise_scale_H_in_Y * h + model.noise_scale_eps_Y * eps_y
    return Dataset(x, y, a, h if expose_latent else None)


def sample_data(model: ScmModel, n: int, rng: np.random.Generator, expose_latent: bool = False) -> Dataset:
    """Draw ``n`` observational rows; ``H`` is kept only if ``expose_latent``."""
    e = _noise(rng, n)
    a, h, eps_x, eps_y = e.T
    x = model.alpha_A * a + model.alpha_H * h + model.alpha_eps * eps_x
    return _finish(model, a, h, x, eps_y, expose_latent)


def apply_intervention(
    model: ScmModel,
    spec: InterventionSpec,
    n: int,
    rng: np.random.Generator,
    expose_latent: bool = False,
) -> Dataset:
    """Draw ``n`` rows from the intervened SCM; the Y assignment is untouched."""
    e = _noise(rng, n)
    a, h, eps_x, eps_y = e.T
    x_obs = model.alpha_A * a + model.alpha_H * h + model.alpha_eps * eps_x
    kind = InterventionKind(spec.kind)
    if kind is InterventionKind.HARD_ON_X:
        x = np.full(n, float(spec.value))
    elif kind is InterventionKind.SHIFT_ON_X:
        x = x_obs + spec.value
    elif kind is InterventionKind.HARD_ON_A:
        a = np.full(n, float(spec.value))
        x = model.alpha_A * a + model.alpha_H * h + model.alpha_eps * eps_x
    elif kind is InterventionKind.CONFOUNDING_SCALE:
        x = spec.value * h
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unsupported intervention {spec.kind!r}")
    return _finish(model, a, h, x, eps_y, expose_latent)


def make_model(alphas, rng: np.random.Generator, kappa: float = 0.0) -> ScmModel:
    """Model with a freshly sampled causal function (curved tails if ``kappa > 0``)."""
    fn = sample_causal_fn(rng, alphas)
    if kappa > 0:
        fn = curvature_violation(fn, kappa, rng)
    return ScmModel(*_unit_norm(alphas), causal_fn=fn)
