"""Worst-case risks in one-dimensional linear SCMs and related checks.

The linear model is

    A := e_A,  H := sigma e_H,  X := g(A) + e_X + H / sigma,
    Y := beta X + e_Y + H / sigma,

with independent zero-mean noise, ``g(a) = gamma a`` unless a custom
``g`` is supplied. The composite noises are ``xi_X = e_X + e_H`` and
``xi_Y = e_Y + e_H``, so the observational law of (X, Y, A) does not
depend on ``sigma``.

For a candidate ``x -> b x`` every intervention gives a risk of the form

    E[(Y - b X)^2] = (beta - b)^2 E[X^2] + 2 (beta - b) E[X xi_Y] + E[xi_Y^2],

which is what :func:`intervention_risk` evaluates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .scm import InterventionKind, InterventionSpec


@dataclass(frozen=True, eq=False)
class LinearScm:
    beta: float
    gamma: float
    sigma: float = 1.0
    # Variances of (e_A, e_X, e_Y, e_H).
    noise_var: tuple = (1.0, 1.0, 1.0, 1.0)
    g: Callable[[float], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        v_a, v_x, v_y, v_h = self.noise_var
        if min(v_a, v_x, v_y) <= 0 or v_h < 0:
            raise ValueError("noise variances of e_A, e_X, e_Y must be positive and of e_H nonnegative")

    @property
    def var_a(self):
        return self.noise_var[0]

    @property
    def var_x(self):
        return self.noise_var[1]

    @property
    def var_y(self):
        return self.noise_var[2]

    @property
    def var_h(self):
        return self.noise_var[3]

    def g_value(self, a: float) -> float:
        return self.gamma * a if self.g is None else float(self.g(a))

    @property
    def xi_y_var(self) -> float:
        """``E[xi_Y^2]``, the risk of the causal coefficient."""
        return self.var_y + self.var_h

    @property
    def xi_cov(self) -> float:
        """``E[xi_X xi_Y]``, nonzero exactly when there is hidden confounding."""
        return self.var_h


OBSERVATIONAL = InterventionSpec(InterventionKind.SHIFT_ON_X, 0.0)


def moments(scm: LinearScm, spec: InterventionSpec) -> tuple[float, float, float]:
    """``(E[X^2], E[X xi_Y], E[xi_Y^2])`` under the intervention ``spec``."""
    kind = InterventionKind(spec.kind)
    v = float(spec.value)
    xi_var = scm.xi_y_var
    noise_x = scm.var_x + scm.var_h
    if kind is InterventionKind.SHIFT_ON_X:
        if scm.g is not None:
            raise ValueError("closed-form shift risks assume a linear g")
        return scm.gamma**2 * scm.var_a + noise_x + v * v, scm.var_h, xi_var
    if kind is InterventionKind.HARD_ON_X:
        return v * v, 0.0, xi_var
    if kind is InterventionKind.HARD_ON_A:
        return scm.g_value(v) ** 2 + noise_x, scm.var_h, xi_var
    if kind is InterventionKind.CONFOUNDING_SCALE:
        # X := v H = v sigma e_H
        return (v * scm.sigma) ** 2 * scm.var_h, v * scm.sigma * scm.var_h, xi_var
    raise ValueError(f"unsupported intervention {spec.kind!r}")


def intervention_risk(scm: LinearScm, b: float, spec: InterventionSpec) -> float:
    ex2, ex_xi, xi2 = moments(scm, spec)
    d = scm.beta - b
    return d * d * ex2 + 2.0 * d * ex_xi + xi2


def interval(kind, lo: float, hi: float) -> list[InterventionSpec]:
    """Endpoints representing an interval of intervention values.

    Every risk above is an upward-opening quadratic (or constant) in the
    intervention value, so its supremum over ``[lo, hi]`` is attained at an
    endpoint.
    """
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    return [InterventionSpec(kind, lo), InterventionSpec(kind, hi)]


def linear_worst_case_risk(scm: LinearScm, b: float, interventions: Iterable[InterventionSpec]) -> float:
    risks = [intervention_risk(scm, b, spec) for spec in interventions]
    if not risks:
        raise ValueError("intervention set is empty")
    return max(risks)


def brute_force_minimax(scm: LinearScm, b_grid, interventions: Sequence[InterventionSpec]) -> tuple[float, float]:
    """``argmin_b max_i risk`` over a finite grid of candidate slopes."""
    b_grid = np.asarray(b_grid, dtype=float)
    interventions = list(interventions)
    if b_grid.size == 0 or not interventions:
        raise ValueError("b_grid and interventions must be nonempty")
    worst = np.array([linear_worst_case_risk(scm, b, interventions) for b in b_grid])
    j = int(np.argmin(worst))
    return float(b_grid[j]), float(worst[j])


def ols_slope(scm: LinearScm) -> float:
    """Population regression slope of Y on X in the observational model."""
    ex2, ex_xi, _ = moments(scm, OBSERVATIONAL)
    return scm.beta + ex_xi / ex2


@dataclass(frozen=True)
class BoundReport:
    applicable: bool
    lhs: float
    bound: float
    holds: bool
    note: str = ""


def check_bound_prop3(scm: LinearScm, f_star_coeff: float, interventions) -> BoundReport:
    """Check ``sup_i E[(f(X) - f*(X))^2] <= 4 Var(xi_Y)``.

    Only candidates whose worst-case risk does not exceed that of the
    causal coefficient are covered; others get a not-applicable report.
    """
    interventions = list(interventions)
    bound = 4.0 * scm.xi_y_var
    star = linear_worst_case_risk(scm, f_star_coeff, interventions)
    causal = linear_worst_case_risk(scm, scm.beta, interventions)
    d2 = (scm.beta - f_star_coeff) ** 2
    lhs = max(d2 * moments(scm, spec)[0] for spec in interventions)
    if star > causal * (1.0 + 1e-12):
        return BoundReport(False, lhs, bound, True, "candidate is worse than the causal coefficient")
    return BoundReport(True, lhs, bound, lhs <= bound)


def check_bound_bounded_derivative(delta: float, K: float, var_xi: float, kind: str, epsilon: float = 0.0) -> float:
    """Generalization-gap bound for functions with derivative bounded by ``K``.

    ``kind`` is ``"confounding_removing"`` or ``"confounding_preserving"``;
    ``delta`` is the largest distance of an intervened X value from the
    observational support.
    """
    if min(delta, K, var_xi, epsilon) < 0:
        raise ValueError("delta, K, var_xi and epsilon must be nonnegative")
    dk = delta * K
    sd = math.sqrt(var_xi)
    if kind == "confounding_removing":
        return 4.0 * dk * dk + 4.0 * dk * sd
    if kind == "confounding_preserving":
        return epsilon + 12.0 * dk * dk + 32.0 * dk * sd + 4.0 * math.sqrt(2.0) * dk * math.sqrt(epsilon)
    raise ValueError(f"unknown kind {kind!r}")


# --- scale-of-confounding interventions X := i H ----------------------------


def confounding_scale_alternative_sigma(beta: float, b: float, i0: float, c: float) -> float:
    """Confounding scale of an observationally equivalent model in which
    ``b`` loses at least ``c`` against the best worst-case risk.

    Under ``X := i0 H`` the risk of ``b`` in that model equals ``c + 2``
    for unit noise variances, while the causal coefficient keeps risk 2.
    """
    if b == beta:
        raise ValueError("b must differ from the causal coefficient")
    if not c > 0:
        raise ValueError("c must be positive")
    d = (beta - b) * i0
    return (math.copysign(1.0, d) * math.sqrt(1.0 + c) - 1.0) / d


# --- Monte Carlo ---------------------------------------------------------------


def sample_linear(scm: LinearScm, spec: InterventionSpec, n: int, rng: np.random.Generator):
    """Gaussian draws of ``(X, Y)`` under ``spec``."""
    sd = np.sqrt(np.asarray(scm.noise_var, dtype=float))
    e_a, e_x, e_y, e_h = (rng.standard_normal(n) * s for s in sd)
    h = scm.sigma * e_h
    kind = InterventionKind(spec.kind)
    if kind is InterventionKind.HARD_ON_A:
        a = np.full(n, float(spec.value))
    else:
        a = e_a
    g_a = scm.gamma * a if scm.g is None else np.vectorize(scm.g, otypes=[float])(a)
    x = g_a + e_x + h / scm.sigma
    if kind is InterventionKind.SHIFT_ON_X:
        x = x + spec.value
    elif kind is InterventionKind.HARD_ON_X:
        x = np.full(n, float(spec.value))
    elif kind is InterventionKind.CONFOUNDING_SCALE:
        x = spec.value * h
    y = scm.beta * x + e_y + h / scm.sigma
    return x, y


def mc_risk(scm: LinearScm, b: float, spec: InterventionSpec, n: int, rng) -> tuple[float, float]:
    """Monte Carlo risk of ``b`` and its standard error."""
    x, y = sample_linear(scm, spec, n, rng)
    sq = (y - b * x) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n))


# --- constructive counterexamples --------------------------------------------


def extrapolation_offset(c: float, eps: float, noise_var: float) -> float:
    """Offset that makes a candidate lose at least ``c`` on a region of mass ``eps``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if c < 0:
        raise ValueError("c must be nonnegative")
    return (math.sqrt(2.0 * noise_var + c) + math.sqrt(noise_var)) / math.sqrt(eps)


@dataclass
class ExtrapolationDemo:
    f_alt: Callable
    offset: float
    eps: float
    gap: float
    gap_se: float
    intervention_range: tuple


def impossibility_demo_extrapolation(
    f_bar: Callable,
    c: float,
    support: tuple,
    intervention_region: tuple,
    noise_var: float,
    f_true: Callable | None = None,
    noise_sampler: Callable | None = None,
    n: int = 1_000_000,
    seed: int = 0,
) -> ExtrapolationDemo:
    """Alternative causal function agreeing with ``f_true`` on ``support``.

    The alternative equals ``f_bar + offset`` on ``intervention_region`` and
    is continuous in between. Under the confounding-removing intervention
    that draws X uniformly over the hull of support and region, ``f_bar``
    then has worst-case risk at least ``c`` above the optimum
    ``noise_var``. ``gap`` is the Monte Carlo estimate of that excess.
    """
    s_lo, s_hi = map(float, support)
    r_lo, r_hi = map(float, intervention_region)
    if not (s_lo < s_hi and r_lo < r_hi):
        raise ValueError("support and region must be nondegenerate intervals")
    if r_lo <= s_hi and s_lo <= r_hi:
        raise ValueError("intervention region overlaps the support")
    if f_true is None:
        f_true = f_bar
    lo, hi = min(s_lo, r_lo), max(s_hi, r_hi)
    eps = (r_hi - r_lo) / (hi - lo)
    offset = extrapolation_offset(c, eps, noise_var)

    if r_lo > s_hi:
        def weight(x):
            return np.clip((x - s_hi) / (r_lo - s_hi), 0.0, 1.0)
    else:
        def weight(x):
            return np.clip((s_lo - x) / (s_lo - r_hi), 0.0, 1.0)

    def f_alt(x):
        x = np.asarray(x, dtype=float)
        w = weight(x)
        return (1.0 - w) * f_true(x) + w * (f_bar(x) + offset)

    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=n)
    if noise_sampler is None:
        xi = rng.standard_normal(n) * math.sqrt(noise_var)
    else:
        xi = noise_sampler(rng, n)
    y = f_alt(x) + xi
    excess = (y - f_bar(x)) ** 2 - noise_var
    return ExtrapolationDemo(
        f_alt=f_alt,
        offset=offset,
        eps=eps,
        gap=float(excess.mean()),
        gap_se=float(excess.std(ddof=1) / math.sqrt(n)),
        intervention_range=(lo, hi),
    )


@dataclass
class InstrumentDemo:
    spike: int
    g_alt: Callable
    gap_closed_form: float
    gap_mc: float
    gap_se: float
    fd_slope: float
    fd_limit: float


def impossibility_demo_intA(
    scm: LinearScm,
    b_bar: float,
    c: float,
    a_support: tuple = (-math.sqrt(3.0), math.sqrt(3.0)),
    a_target: float | None = None,
    a_set: Sequence[float] | None = None,
    n: int = 1_000_000,
    seed: int = 0,
) -> InstrumentDemo:
    """Observationally equivalent ``g`` that makes ``b_bar`` lose at least ``c``.

    The alternative ``g`` equals the original one on ``a_support`` and
    reaches an integer spike at ``a_target`` outside of it; a hard
    intervention on A at ``a_target`` then drives X far out. Also reports a
    forward finite difference of the worst-case risk over ``a_set`` along
    the direction of ``E[xi_X xi_Y]`` at the causal coefficient, which is
    negative whenever there is hidden confounding.
    """
    if b_bar == scm.beta:
        raise ValueError("b_bar must differ from the causal coefficient")
    cov = scm.xi_cov
    if cov == 0.0:
        raise ValueError("E[xi_X xi_Y] = 0: no hidden confounding, the construction does not apply")
    lo, hi = a_support
    if a_target is None:
        a_target = hi + 1.0
    if lo <= a_target <= hi:
        raise ValueError("a_target must lie outside the support of A")

    d = b_bar - scm.beta
    noise_x = scm.var_x + scm.var_h
    # n^2 d^2 + d^2 Var(xi_X) + 2 d E[xi_X xi_Y] >= c
    need = (c - d * d * noise_x - 2.0 * d * cov) / (d * d)
    spike = max(1, math.ceil(math.sqrt(max(need, 0.0))))
    width = 0.5 * min(abs(a_target - lo), abs(a_target - hi))
    g0 = scm.g_value

    def g_alt(a):
        tent = max(0.0, 1.0 - abs(a - a_target) / width)
        return g0(a) + tent * (spike - g0(a_target))

    alt = LinearScm(scm.beta, scm.gamma, scm.sigma, scm.noise_var, g=g_alt)
    spec = InterventionSpec(InterventionKind.HARD_ON_A, a_target)
    gap_closed = intervention_risk(alt, b_bar, spec) - scm.xi_y_var
    rng = np.random.default_rng(seed)
    risk_mc, se = mc_risk(alt, b_bar, spec, n, rng)

    if a_set is None:
        a_set = np.linspace(lo, hi, 11)
    specs = [InterventionSpec(InterventionKind.HARD_ON_A, a) for a in a_set]
    u = math.copysign(1.0, cov)
    h = 1e-6
    base = linear_worst_case_risk(scm, scm.beta, specs)
    moved = linear_worst_case_risk(scm, scm.beta + h * u, specs)
    return InstrumentDemo(
        spike=spike,
        g_alt=g_alt,
        gap_closed_form=gap_closed,
        gap_mc=risk_mc - scm.xi_y_var,
        gap_se=se,
        fd_slope=(moved - base) / h,
        fd_limit=-2.0 * abs(cov),
    )


# --- bounded-derivative scenarios ---------------------------------------------


@dataclass
class DerivativeScenario:
    kind: str
    delta: float
    K: float
    gap: float
    bound: float
    epsilon: float

    @property
    def holds(self) -> bool:
        return self.gap <= self.bound


def _uniform_noise_model(n, rng):
    a, h, e_y = rng.uniform(-1.0, 1.0, size=(3, n))
    x = 0.5 * a + 0.5 * h
    xi = 0.3 * h + 0.2 * e_y
    return x, xi


def bounded_derivative_scenario(
    kind: str,
    delta: float,
    K: float = 1.0,
    n: int = 200_000,
    n_values: int = 21,
    seed: int = 0,
) -> DerivativeScenario:
    """Monte Carlo generalization gap for a derivative-bounded extrapolation.

    Observational X = (A + H) / 2 has support [-1, 1] and
    Y = f(X) + 0.3 H + 0.2 e_Y with Uniform(-1, 1) noise. The estimate
    ``f*`` agrees with the truth on [-1, 1] and continues along its
    tangents; the truth bends away outside with slope at most ``K``.

    ``confounding_removing`` uses hard interventions X := x on
    [-1 - delta, 1 + delta]; the optimum is then E[xi_Y^2] exactly.
    ``confounding_preserving`` uses shifts X := X + s with |s| <= delta;
    the optimum is approximated from above by the best candidate among
    linear functions with slope in [-K, K] and the truth itself, and
    ``epsilon`` is the corresponding minimax gap of ``f*`` under the
    model whose causal function is ``f*``.
    """
    rng = np.random.default_rng(seed)
    slope = 0.5 * K

    def f_star(x):
        return slope * x

    def bend(t):
        # C^1, zero with zero slope at t = 0, slope in [0, 1).
        t = np.maximum(t, 0.0)
        return t - (1.0 - np.exp(-t))

    def f_true(x):
        x = np.asarray(x, dtype=float)
        return slope * x + 0.5 * K * (bend(x - 1.0) + bend(-1.0 - x))

    x_obs, xi = _uniform_noise_model(n, rng)
    noise_var = (0.09 + 0.04) / 3.0
    values = np.linspace(-delta, delta, n_values) if kind == "confounding_preserving" else np.linspace(-1 - delta, 1 + delta, n_values)

    def worst(f_pred, f_causal):
        risks = []
        for v in values:
            x = np.full(n, v) if kind == "confounding_removing" else x_obs + v
            y = f_causal(x) + xi
            risks.append(np.mean((y - f_pred(x)) ** 2))
        return max(risks)

    if kind == "confounding_removing":
        gap = worst(f_star, f_true) - noise_var
        epsilon = 0.0
    elif kind == "confounding_preserving":
        cands = [lambda x, s=s: s * np.asarray(x) for s in np.linspace(-K, K, 41)]
        eps_opt = min(worst(cand, f_star) for cand in cands + [f_star])
        epsilon = max(worst(f_star, f_star) - eps_opt, 0.0)
        best_alt = min(worst(cand, f_true) for cand in cands + [f_true])
        gap = worst(f_star, f_true) - best_alt
    else:
        raise ValueError(f"unknown kind {kind!r}")
    bound = check_bound_bounded_derivative(delta, K, noise_var, kind, epsilon)
    return DerivativeScenario(kind, delta, K, float(gap), bound, float(epsilon))
