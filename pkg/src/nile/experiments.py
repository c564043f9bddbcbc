"""Worst-case-risk curves of NILE and the OLS-spline baseline on simulated SCMs.

For every model a fresh causal function is drawn, one training set is
sampled, each method is fitted, and the risk under hard interventions
setting X anywhere in ``[-x, x]`` is evaluated for every strength ``x``:

    E[xi_Y^2] + sup_{|t| <= x} (f(t) - f_hat(t))^2.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import format_float
from .estimator import NileOptions, nile_fit, predict
from .scm import NOISE_VAR, make_model, sample_data

logger = logging.getLogger(__name__)

NILE = "NILE"
OLS_SPLINE = "OLS_SPLINE"
METHODS = (NILE, OLS_SPLINE)
MAX_FAILURE_SHARE = 0.10

SQRT13 = math.sqrt(1.0 / 3.0)
SQRT23 = math.sqrt(2.0 / 3.0)
DEFAULT_ALPHAS = (
    (SQRT23, 0.0, SQRT13),
    (SQRT13, SQRT13, SQRT13),
    (SQRT13, SQRT23, 0.0),
)


def default_strengths() -> tuple:
    return tuple(round(0.1 * i, 10) for i in range(21))


@dataclass(frozen=True)
class ExperimentConfig:
    alphas: tuple
    n: int = 200
    n_models: int = 100
    intervention_strengths: tuple = field(default_factory=default_strengths)
    eval_grid_points: int = 1001
    methods: tuple = METHODS
    kappa: float = 0.0
    master_seed: int = 0
    nile: NileOptions = field(default_factory=NileOptions)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(v) for v in self.alphas))
        object.__setattr__(self, "intervention_strengths", tuple(float(s) for s in self.intervention_strengths))
        object.__setattr__(self, "methods", tuple(self.methods))
        if abs(sum(v * v for v in self.alphas) - 1.0) > 1e-10:
            raise ValueError(f"alphas must have unit norm, got {self.alphas}")
        if self.n_models < 1:
            raise ValueError("n_models must be at least 1")
        if self.eval_grid_points < 2:
            raise ValueError("eval_grid_points must be at least 2")
        if min(self.intervention_strengths) < 0:
            raise ValueError("intervention strengths must be nonnegative")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown method(s) {sorted(unknown)}; valid: {list(METHODS)}")

    @property
    def config_id(self) -> str:
        a_a, a_h, a_e = self.alphas
        return f"aA={a_a:.4f}_aH={a_h:.4f}_ae={a_e:.4f}_kappa={self.kappa:g}"


@dataclass
class RiskCurve:
    method: str
    strength: float
    mean_risk: float
    per_model_risks: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    # method -> (n_models, n_strengths) array, NaN where a fit failed
    risks: dict
    lambda_star: dict
    failures: list

    def curves(self) -> list[RiskCurve]:
        out = []
        for method, table in self.risks.items():
            for j, strength in enumerate(self.config.intervention_strengths):
                col = table[:, j]
                out.append(RiskCurve(method, strength, float(np.nanmean(col)), col.copy()))
        return out

    def mean_curve(self, method: str) -> np.ndarray:
        return np.nanmean(self.risks[method], axis=0)

    def mean_lambda_star(self, method: str = NILE) -> float:
        lam = self.lambda_star[method]
        return float(np.nanmean(lam))

    def rows(self):
        """Long-format rows ``(config_id, method, model_idx, strength, risk, lambda_star)``."""
        cid = self.config.config_id
        for method, table in self.risks.items():
            lam = self.lambda_star[method]
            for i in range(table.shape[0]):
                for j, strength in enumerate(self.config.intervention_strengths):
                    yield cid, method, i, strength, table[i, j], lam[i]


def worst_case_risk(f_hat, f_true, x_max: float, grid_points: int = 1001, noise_var: float = NOISE_VAR) -> float:
    """``noise_var + max_t (f_true(t) - f_hat(t))^2`` over a grid on ``[-x_max, x_max]``."""
    if x_max < 0:
        raise ValueError("x_max must be nonnegative")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    grid = np.linspace(-x_max, x_max, grid_points)
    diff = np.asarray(f_true(grid)) - np.asarray(f_hat(grid))
    return float(noise_var + np.max(diff**2))


def risk_profile(f_hat, f_true, strengths, grid_points: int, noise_var: float = NOISE_VAR) -> np.ndarray:
    """Worst-case risks for all strengths from one shared grid.

    The grid spans the largest strength, and the supremum for strength
    ``x`` is taken over the grid points in ``[-x, x]``; the sets are nested,
    so the profile is nondecreasing in ``x``.
    """
    strengths = np.asarray(strengths, dtype=float)
    x_max = float(strengths.max())
    grid = np.linspace(-x_max, x_max, grid_points)
    sq = (np.asarray(f_true(grid)) - np.asarray(f_hat(grid))) ** 2
    abs_grid = np.abs(grid)
    out = np.empty(strengths.size)
    for j, s in enumerate(strengths):
        inside = abs_grid <= s + 1e-9 * max(1.0, x_max)
        if not inside.any():
            inside = abs_grid == abs_grid.min()
        out[j] = noise_var + sq[inside].max()
    return out


def model_seed_sequence(master_seed: int, model_idx: int) -> np.random.SeedSequence:
    """Independent stream per model, so adding models leaves earlier ones unchanged."""
    return np.random.SeedSequence([int(master_seed), int(model_idx)])


def _run_model(config: ExperimentConfig, model_idx: int):
    rng = np.random.default_rng(model_seed_sequence(config.master_seed, model_idx))
    model = make_model(config.alphas, rng, kappa=config.kappa)
    data = sample_data(model, config.n, rng)
    cv_seed = int(rng.integers(2**31 - 1))

    risks = {}
    lambdas = {}
    errors = {}
    for method in config.methods:
        fixed = 0.0 if method == OLS_SPLINE else config.nile.fixed_lambda
        options = replace(config.nile, seed=cv_seed, fixed_lambda=fixed)
        try:
            fit = nile_fit(data, options)
        except (ValueError, np.linalg.LinAlgError) as exc:
            errors[method] = str(exc)
            risks[method] = np.full(len(config.intervention_strengths), np.nan)
            lambdas[method] = np.nan
            continue
        risks[method] = risk_profile(
            lambda t, fit=fit: predict(fit, t),
            model.causal_fn,
            config.intervention_strengths,
            config.eval_grid_points,
            model.noise_var,
        )
        lambdas[method] = fit.lambda_star
    return model_idx, risks, lambdas, errors


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Fit every method on ``config.n_models`` simulated models."""
    n_str = len(config.intervention_strengths)
    risks = {m: np.full((config.n_models, n_str), np.nan) for m in config.methods}
    lambdas = {m: np.full(config.n_models, np.nan) for m in config.methods}
    failures = []

    indices = range(config.n_models)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_model, [config] * config.n_models, indices))
    else:
        results = [_run_model(config, i) for i in indices]

    for idx, model_risks, model_lambdas, errors in sorted(results, key=lambda r: r[0]):
        for method in config.methods:
            risks[method][idx] = model_risks[method]
            lambdas[method][idx] = model_lambdas[method]
        for method, msg in errors.items():
            logger.warning("model %d, %s: fit failed: %s", idx, method, msg)
            failures.append((idx, method, msg))

    n_fits = config.n_models * len(config.methods)
    if failures and len(failures) > MAX_FAILURE_SHARE * n_fits:
        raise RuntimeError(f"{len(failures)} of {n_fits} fits failed in {config.config_id}; first: {failures[0][2]}")
    return ExperimentResult(config, risks, lambdas, failures)


ROW_HEADER = ("config_id", "method", "model_idx", "strength", "risk", "lambda_star")
SUMMARY_HEADER = ("config_id", "method", "strength", "mean_risk", "n_models", "mean_lambda_star")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format_float(value)


def write_rows(results, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROW_HEADER)
        for result in results:
            for row in result.rows():
                writer.writerow([_fmt(v) for v in row])


def summary_rows(result: ExperimentResult):
    cid = result.config.config_id
    for method in result.config.methods:
        mean = result.mean_curve(method)
        n_ok = int(np.sum(~np.isnan(result.risks[method][:, 0])))
        lam = result.mean_lambda_star(method)
        for strength, value in zip(result.config.intervention_strengths, mean):
            yield cid, method, strength, value, n_ok, lam


def write_summary(results, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for result in results:
            for row in summary_rows(result):
                writer.writerow([_fmt(v) for v in row])
