"""JSON serialization of fitted NILE models.

Floats are written with ``repr``, the shortest decimal that parses back to
the same double, so a saved fit predicts bit-for-bit like the original.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .estimator import NileFit
from .ivtests import TestKind, TestReport
from .splines import make_cubic_basis

FORMAT_VERSION = 1


class ArtifactError(ValueError):
    """A fit artifact failed to parse or violates an invariant."""


def _float_out(value: float):
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return value


def _float_in(value, name: str) -> float:
    if isinstance(value, str) and value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ArtifactError(f"field {name!r} must be a number, got {value!r}")
    return float(value)


def fit_to_dict(fit: NileFit) -> dict:
    report = fit.test_report_at_solution
    return {
        "format_version": FORMAT_VERSION,
        "theta": [float(v) for v in fit.theta],
        "a": fit.basis_B.a,
        "b": fit.basis_B.b,
        "k": fit.basis_B.k,
        "knots": [float(v) for v in fit.basis_B.knots],
        "instrument_a": fit.basis_C.a,
        "instrument_b": fit.basis_C.b,
        "gamma": _float_out(fit.gamma),
        "gamma_cv": None if fit.gamma_cv is None else _float_out(fit.gamma_cv),
        "delta": _float_out(fit.delta),
        "lambda_star": _float_out(fit.lambda_star),
        "fallback_used": bool(fit.fallback_used),
        "alpha": fit.alpha,
        "test_kind": TestKind(fit.test_kind).value,
        "seed": int(fit.seed),
        "statistic": _float_out(report.statistic),
        "threshold": _float_out(report.threshold),
        "reject": bool(report.reject),
    }


def dumps(fit: NileFit) -> str:
    return json.dumps(fit_to_dict(fit), indent=2) + "\n"


def save(fit: NileFit, path) -> None:
    Path(path).write_text(dumps(fit))


def _require(doc: dict, name: str):
    if name not in doc:
        raise ArtifactError(f"missing field {name!r}")
    return doc[name]


def fit_from_dict(doc: dict) -> NileFit:
    if not isinstance(doc, dict):
        raise ArtifactError("artifact must be a JSON object")
    k = _require(doc, "k")
    if isinstance(k, bool) or not isinstance(k, int) or k < 4:
        raise ArtifactError(f"invariant k >= 4 violated: k={k!r}")
    a = _float_in(_require(doc, "a"), "a")
    b = _float_in(_require(doc, "b"), "b")
    if not a < b:
        raise ArtifactError(f"invariant a < b violated: a={a!r}, b={b!r}")
    theta = np.array([_float_in(v, "theta") for v in _require(doc, "theta")])
    if theta.shape != (k,):
        raise ArtifactError(f"invariant len(theta) == k violated: {theta.size} != {k}")
    if not np.all(np.isfinite(theta)):
        raise ArtifactError("invariant finite theta violated")
    basis_B = make_cubic_basis(a, b, k)
    knots = np.array([_float_in(v, "knots") for v in _require(doc, "knots")])
    if knots.shape != basis_B.knots.shape or not np.array_equal(knots, basis_B.knots):
        raise ArtifactError("invariant knots == clamped equidistant knots on [a, b] violated")
    basis_C = make_cubic_basis(
        _float_in(doc.get("instrument_a", a), "instrument_a"),
        _float_in(doc.get("instrument_b", b), "instrument_b"),
        k,
    )
    lambda_star = _float_in(_require(doc, "lambda_star"), "lambda_star")
    if not lambda_star >= 0:
        raise ArtifactError(f"invariant lambda_star >= 0 violated: {lambda_star!r}")
    fallback = _require(doc, "fallback_used")
    if not isinstance(fallback, bool):
        raise ArtifactError("field 'fallback_used' must be a boolean")
    alpha = _float_in(_require(doc, "alpha"), "alpha")
    if not 0 < alpha < 1:
        raise ArtifactError(f"invariant 0 < alpha < 1 violated: {alpha!r}")
    try:
        kind = TestKind(_require(doc, "test_kind"))
    except ValueError:
        raise ArtifactError(f"unknown test_kind {doc['test_kind']!r}") from None
    stat = _float_in(doc.get("statistic", "nan"), "statistic")
    threshold = _float_in(doc.get("threshold", "nan"), "threshold")
    report = TestReport(stat, threshold, bool(doc.get("reject", stat > threshold)), alpha, kind)
    if not fallback and report.reject:
        raise ArtifactError("invariant 'test accepts unless fallback_used' violated")
    gamma_cv = doc.get("gamma_cv")
    return NileFit(
        theta=theta,
        basis_B=basis_B,
        basis_C=basis_C,
        gamma=_float_in(_require(doc, "gamma"), "gamma"),
        delta=_float_in(_require(doc, "delta"), "delta"),
        lambda_star=lambda_star,
        fallback_used=fallback,
        test_report_at_solution=report,
        alpha=alpha,
        test_kind=kind,
        seed=int(_require(doc, "seed")),
        gamma_cv=None if gamma_cv is None else _float_in(gamma_cv, "gamma_cv"),
    )


def loads(text: str) -> NileFit:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"not valid JSON: {exc}") from None
    return fit_from_dict(doc)


def load(path) -> NileFit:
    return loads(Path(path).read_text())
