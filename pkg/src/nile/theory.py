"""A fixed battery of numeric checks on worst-case risks in linear SCMs.

Each check produces one :class:`TheoryRow`. ``value`` is the quantity
under test (a worst-case risk, a gap, or a bound evaluation) and
``target`` the number it is compared against; ``relation`` says how.

Groups:

a  the causal coefficient has worst-case risk E[xi_Y^2] under every
   intervention set on X or A (exact closed form);
b  interventions that rescale the confounder: the causal coefficient has
   risk 2, a tilted candidate does better, and an observationally
   equivalent model with another confounding scale punishes the tilted
   candidate by any prescribed amount;
c  brute-force minimax slopes under shift interventions stay within
   4 Var(xi_Y) of the causal function;
d  bounded-derivative generalization bounds: formula against independent
   arithmetic, then against Monte Carlo gaps;
e  the two impossibility constructions reach their target gap.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import format_float
from .minimax import (
    LinearScm,
    bounded_derivative_scenario,
    brute_force_minimax,
    check_bound_bounded_derivative,
    check_bound_prop3,
    confounding_scale_alternative_sigma,
    impossibility_demo_extrapolation,
    impossibility_demo_intA,
    interval,
    intervention_risk,
    linear_worst_case_risk,
)
from .scm import NOISE_VAR, InterventionKind, InterventionSpec, make_model

MC_RTOL = 0.05
ARITH_TOL = 1e-12


@dataclass(frozen=True)
class TheoryRow:
    scenario_id: str
    candidate: str
    value: float
    target: float
    relation: str  # "==", "<=", "<", ">="
    passed: bool


def _row(sid, candidate, value, target, relation, tol=0.0) -> TheoryRow:
    value, target = float(value), float(target)
    if relation == "==":
        ok = abs(value - target) <= tol * max(1.0, abs(target))
    elif relation == "<=":
        ok = value <= target + tol * max(1.0, abs(target))
    elif relation == "<":
        ok = value < target
    elif relation == ">=":
        ok = value >= target - tol * max(1.0, abs(target))
    else:
        raise ValueError(f"unknown relation {relation!r}")
    return TheoryRow(sid, candidate, value, target, relation, bool(ok))


def _random_scm(rng, confounded=True) -> LinearScm:
    v_h = rng.uniform(0.2, 2.0) if confounded else 0.0
    return LinearScm(
        beta=float(rng.uniform(-2, 2)),
        gamma=float(rng.uniform(0.2, 2)),
        sigma=float(rng.uniform(0.5, 2)),
        noise_var=tuple(float(v) for v in rng.uniform(0.2, 2.0, 3)) + (float(v_h),),
    )


def causal_invariance_rows(rng) -> list[TheoryRow]:
    rows = []
    for i in range(10):
        scm = _random_scm(rng, confounded=i % 5 != 0)
        lo, hi = sorted(rng.uniform(-5, 5, 2))
        specs = (
            interval(InterventionKind.SHIFT_ON_X, lo, hi)
            + [InterventionSpec(InterventionKind.HARD_ON_X, v) for v in rng.uniform(-10, 10, 5)]
            + [InterventionSpec(InterventionKind.HARD_ON_A, v) for v in rng.uniform(-10, 10, 5)]
            + [InterventionSpec(InterventionKind.CONFOUNDING_SCALE, v) for v in rng.uniform(0.1, 5, 3)]
        )
        risk = linear_worst_case_risk(scm, scm.beta, specs)
        rows.append(_row(f"a{i:02d}_causal_risk_is_noise_var", "b=beta", risk, scm.xi_y_var, "=="))
    return rows


def confounding_scale_rows() -> list[TheoryRow]:
    beta, sigma, u = 1.0, 1.0, 2.0
    scm = LinearScm(beta, gamma=1.0, sigma=sigma)
    specs = interval(InterventionKind.CONFOUNDING_SCALE, 0.5, u)
    b_tilt = beta + 1.0 / (sigma * u)
    rows = [
        _row("b_causal_risk", "b=beta", linear_worst_case_risk(scm, beta, specs), 2.0, "=="),
        _row("b_tilted_beats_causal", "b=beta+1/(sigma*u)", linear_worst_case_risk(scm, b_tilt, specs), 2.0, "<"),
    ]
    # closed form 1 + (1 - i/u)^2 at the worse endpoint
    closed = max(1.0 + (1.0 - s.value / u) ** 2 for s in specs)
    rows.append(_row("b_tilted_closed_form", "b=beta+1/(sigma*u)", linear_worst_case_risk(scm, b_tilt, specs), closed, "==", ARITH_TOL))
    for c in (1.0, 10.0):
        sig_alt = confounding_scale_alternative_sigma(beta, b_tilt, u, c)
        alt = LinearScm(beta, gamma=1.0, sigma=sig_alt)
        gap = linear_worst_case_risk(alt, b_tilt, specs) - linear_worst_case_risk(alt, beta, specs)
        rows.append(_row(f"b_alternative_scale_gap_c{c:g}", "b=beta+1/(sigma*u)", gap, c, ">=", ARITH_TOL))
    return rows


def shift_minimax_rows(rng) -> list[TheoryRow]:
    rows = []
    for i in range(10):
        scm = _random_scm(rng, confounded=True)
        reach = float(rng.uniform(0.5, 5.0))
        specs = interval(InterventionKind.SHIFT_ON_X, 0.0, reach)
        grid = scm.beta + np.linspace(-3, 3, 6001)
        b_star, risk_star = brute_force_minimax(scm, grid, specs)
        report = check_bound_prop3(scm, b_star, specs)
        rows.append(_row(f"c{i:02d}_minimax_not_worse", f"b={b_star:.6g}", risk_star, linear_worst_case_risk(scm, scm.beta, specs), "<="))
        rows.append(
            TheoryRow(f"c{i:02d}_distance_to_causal", f"b={b_star:.6g}", report.lhs, report.bound, "<=", report.applicable and report.holds)
        )
    return rows


def _bound_reference(delta, K, var_xi, kind, eps) -> float:
    # Exact rational arithmetic for the polynomial part.
    d, k, e = Fraction(delta), Fraction(K), Fraction(eps)
    sd, se = math.sqrt(var_xi), math.sqrt(eps)
    if kind == "confounding_removing":
        return float(4 * d * d * k * k) + 4 * float(d * k) * sd
    return float(e + 12 * d * d * k * k) + 32 * float(d * k) * sd + 4 * math.sqrt(2) * float(d * k) * se


def bounded_derivative_rows(seed: int, mc_n: int) -> list[TheoryRow]:
    rows = []
    cases = [
        (0.0, 1.0, NOISE_VAR, "confounding_removing", 0.0),
        (0.5, 1.0, NOISE_VAR, "confounding_removing", 0.0),
        (1.3, 0.7, 2.0, "confounding_removing", 0.0),
        (0.0, 1.0, NOISE_VAR, "confounding_preserving", 0.0),
        (0.5, 1.0, NOISE_VAR, "confounding_preserving", 0.01),
        (2.0, 0.25, 0.5, "confounding_preserving", 0.3),
    ]
    for j, (delta, K, var, kind, eps) in enumerate(cases):
        got = check_bound_bounded_derivative(delta, K, var, kind, eps)
        rows.append(_row(f"d{j:02d}_{kind}_arith", f"delta={delta:g},K={K:g}", got, _bound_reference(delta, K, var, kind, eps), "==", ARITH_TOL))
    for j, (kind, delta) in enumerate(
        (k, d) for k in ("confounding_removing", "confounding_preserving") for d in (0.25, 0.5, 1.0)
    ):
        sc = bounded_derivative_scenario(kind, delta, K=1.0, n=mc_n, seed=seed + j)
        rows.append(_row(f"d{j:02d}_{kind}_mc", f"tangent_delta={delta:g}", sc.gap, sc.bound, "<="))
    return rows


def impossibility_rows(seed: int, mc_n: int) -> list[TheoryRow]:
    rows = []
    rng = np.random.default_rng(seed)
    model = make_model((math.sqrt(1 / 3), math.sqrt(2 / 3), 0.0), rng)
    f = model.causal_fn
    lo, hi = -1.0, 1.0
    slope_hi = float(f.derivative(hi)[0])

    def f_bar(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= hi, f(np.minimum(x, hi)), f(hi) + slope_hi * (x - hi))

    def uniform_xi(r, n):
        h, e = r.uniform(-1, 1, (2, n))
        return 0.3 * h + 0.2 * e

    for c in (1.0, 10.0):
        demo = impossibility_demo_extrapolation(
            f_bar, c, (lo, hi), (1.5, 4.0), NOISE_VAR, f_true=f, noise_sampler=uniform_xi, n=mc_n, seed=seed
        )
        rows.append(_row(f"e_extrapolation_gap_c{c:g}", "linear_extension", demo.gap, c, ">=", MC_RTOL))
        grid = np.linspace(lo, hi, 1000)
        agree = float(np.max(np.abs(demo.f_alt(grid) - f(grid))))
        rows.append(_row(f"e_extrapolation_agrees_on_support_c{c:g}", "alternative_f", agree, 0.0, "=="))

    scm = LinearScm(beta=1.0, gamma=1.0, sigma=1.0, noise_var=(1.0, 1.0, 1.0, 0.5))
    for c in (1.0, 10.0):
        demo = impossibility_demo_intA(scm, scm.beta - 1.0, c, n=mc_n, seed=seed)
        rows.append(_row(f"e_instrument_gap_closed_c{c:g}", "b=beta-1", demo.gap_closed_form, c, ">="))
        rows.append(_row(f"e_instrument_gap_mc_c{c:g}", "b=beta-1", demo.gap_mc, c, ">=", MC_RTOL))
    rows.append(_row("e_instrument_causal_not_minimax", "b=beta", demo.fd_slope, demo.fd_limit + 1e-3, "<="))
    return rows


def run_theory_suite(seed: int = 0, mc_n: int = 1_000_000) -> list[TheoryRow]:
    """All checks, deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    return (
        causal_invariance_rows(rng)
        + confounding_scale_rows()
        + shift_minimax_rows(rng)
        + bounded_derivative_rows(seed, max(mc_n // 20, 10_000))
        + impossibility_rows(seed, mc_n)
    )


THEORY_HEADER = ("scenario_id", "candidate", "worst_case_risk", "bound", "relation", "passed")


def write_theory_csv(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(THEORY_HEADER)
        for r in rows:
            writer.writerow([r.scenario_id, r.candidate, format_float(r.value), format_float(r.target), r.relation, "pass" if r.passed else "fail"])
