"""Command-line entry point: ``nile {fit,predict,simulate,experiment,check-theory}``.

Exit status is 0 on success, 2 for unusable input (bad files, bad
options, bad config), and 1 when a fit or a theory check fails. Messages
go to stderr; data go to files or stdout.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import artifact
from .data import DataFormatError, dataset_to_csv, format_float, read_csv, write_csv
from .estimator import NileOptions, nile_fit, predict
from .experiments import DEFAULT_ALPHAS, METHODS, ExperimentConfig, default_strengths, run_experiment, write_rows, write_summary
from .scm import make_model, sample_data
from .theory import run_theory_suite, write_theory_csv

logger = logging.getLogger("nile")

EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


# --- config files -------------------------------------------------------------

_SQRT = re.compile(r"^sqrt\((.+)\)$")


def parse_number(text: str) -> float:
    """A float, a fraction ``p/q``, or ``sqrt(...)`` of either."""
    text = text.strip()
    m = _SQRT.match(text)
    if m:
        inner = parse_number(m.group(1))
        if inner < 0:
            raise ValueError(f"sqrt of a negative number: {text!r}")
        return math.sqrt(inner)
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_alphas(text: str) -> list[tuple]:
    """``a,b,c`` triples separated by ``;``."""
    out = []
    for chunk in text.split(";"):
        parts = [p for p in chunk.split(",") if p.strip()]
        if len(parts) != 3:
            raise ValueError(f"alpha triple needs 3 entries, got {chunk.strip()!r}")
        out.append(tuple(parse_number(p) for p in parts))
    return out


def parse_strengths(text: str) -> tuple:
    """Either ``start:stop:step`` (inclusive) or a comma list."""
    if ":" in text:
        start, stop, step = (parse_number(p) for p in text.split(":"))
        if step <= 0:
            raise ValueError("strength step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(count))
    return tuple(parse_number(p) for p in text.split(",") if p.strip())


def _int(text):
    return int(text.strip())


def _str(text):
    return text.strip()


EXPERIMENT_KEYS = {
    "alphas": parse_alphas,
    "n": _int,
    "n_models": _int,
    "strengths": parse_strengths,
    "eval_grid_points": _int,
    "methods": lambda t: tuple(p.strip() for p in t.split(",") if p.strip()),
    "kappa": parse_number,
    "master_seed": _int,
    "k": _int,
    "alpha": parse_number,
    "test": _str,
    "lambda_cap": parse_number,
    "workers": _int,
}
SIMULATE_KEYS = {"alphas": parse_alphas, "n": _int, "kappa": parse_number, "seed": _int}
THEORY_KEYS = {"seed": _int, "mc_n": _int}


def read_config(path, schema: dict) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(schema))}")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


# --- argument handling --------------------------------------------------------


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="number of B-spline basis functions (default 50)")
    p.add_argument("--alpha", type=float, help="test level (default 0.05)")
    p.add_argument("--test", choices=["t1", "t2"], help="orthogonality test (default t2)")
    p.add_argument("--lambda-cap", type=float, help="largest lambda tried before falling back (default 1e6)")


def nile_options(args, base: NileOptions | None = None, seed: int | None = None) -> NileOptions:
    base = base or NileOptions()
    changes = {}
    if getattr(args, "k", None) is not None:
        changes["k"] = args.k
    if getattr(args, "alpha", None) is not None:
        changes["alpha"] = args.alpha
    if getattr(args, "test", None) is not None:
        changes["test_kind"] = args.test
    if getattr(args, "lambda_cap", None) is not None:
        changes["lambda_cap"] = args.lambda_cap
    if seed is not None:
        changes["seed"] = seed
    try:
        return replace(base, **changes)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


# --- subcommands --------------------------------------------------------------


def cmd_fit(args) -> int:
    try:
        data = read_csv(args.data)
    except DataFormatError as exc:
        raise InputError(f"{args.data}: {exc}") from None
    except OSError as exc:
        raise InputError(f"cannot read {args.data}: {exc.strerror}") from None
    options = nile_options(args, seed=args.seed if args.seed is not None else 0)
    try:
        fit = nile_fit(data, options)
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        artifact.save(fit, args.out)
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc.strerror}") from None
    r = fit.test_report_at_solution
    print(f"k={fit.k}")
    print(f"gamma={format_float(fit.gamma)}")
    print(f"delta={format_float(fit.delta)}")
    print(f"lambda_star={'inf' if math.isinf(fit.lambda_star) else format_float(fit.lambda_star)}")
    print(f"fallback_used={str(fit.fallback_used).lower()}")
    print(f"test={r.kind.value} statistic={format_float(r.statistic)} threshold={format_float(r.threshold)}")
    return EXIT_OK


def _grid_from(spec: list) -> np.ndarray:
    lo, hi, step = spec
    if not step > 0 or hi < lo:
        raise InputError("--grid needs LO <= HI and STEP > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def cmd_predict(args) -> int:
    try:
        fit = artifact.load(args.fit)
    except artifact.ArtifactError as exc:
        raise InputError(f"{args.fit}: {exc}") from None
    except OSError as exc:
        raise InputError(f"cannot read {args.fit}: {exc.strerror}") from None
    if args.grid is not None:
        x = _grid_from(args.grid)
    elif args.x:
        x = np.array(args.x, dtype=float)
    else:
        raise InputError("give x values with --x or a grid with --grid LO HI STEP")
    values = predict(fit, x)
    fh, close = _open_out(args.out)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "f_hat"])
        for xi, fi in zip(x, values):
            writer.writerow([format_float(xi), format_float(fi)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = read_config(args.config, SIMULATE_KEYS) if args.config else {}
    alphas = cfg.get("alphas", [DEFAULT_ALPHAS[0]])
    if len(alphas) != 1:
        raise InputError("simulate takes exactly one alpha triple")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    n = args.n if args.n is not None else cfg.get("n", 200)
    rng = np.random.default_rng(seed)
    try:
        model = make_model(alphas[0], rng, kappa=cfg.get("kappa", 0.0))
        data = sample_data(model, n, rng)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.out in (None, "-"):
        sys.stdout.write(dataset_to_csv(data))
    else:
        write_csv(data, args.out)
    return EXIT_OK


def experiment_configs(cfg: dict, args) -> list[ExperimentConfig]:
    nile = NileOptions(
        k=cfg.get("k", 50),
        alpha=cfg.get("alpha", 0.05),
        test_kind=cfg.get("test", "t2"),
        lambda_cap=cfg.get("lambda_cap", 1e6),
    )
    nile = nile_options(args, nile)
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    out = []
    for alphas in cfg.get("alphas", list(DEFAULT_ALPHAS)):
        out.append(
            ExperimentConfig(
                alphas=alphas,
                n=cfg.get("n", 200),
                n_models=cfg.get("n_models", 100),
                intervention_strengths=cfg.get("strengths", default_strengths()),
                eval_grid_points=cfg.get("eval_grid_points", 1001),
                methods=cfg.get("methods", METHODS),
                kappa=cfg.get("kappa", 0.0),
                master_seed=seed,
                nile=nile,
            )
        )
    return out


def cmd_experiment(args) -> int:
    cfg = read_config(args.config, EXPERIMENT_KEYS) if args.config else {}
    try:
        configs = experiment_configs(cfg, args)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    workers = args.workers if args.workers is not None else cfg.get("workers", 1)
    results = []
    for config in configs:
        logger.info("running %s with %d models", config.config_id, config.n_models)
        try:
            results.append(run_experiment(config, workers=workers))
        except RuntimeError as exc:
            print(f"experiment error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
    out = Path(args.out)
    try:
        write_rows(results, out)
        write_summary(results, args.summary or out.with_name(out.stem + "_summary.csv"))
    except OSError as exc:
        raise InputError(f"cannot write output: {exc.strerror}") from None
    for result in results:
        print(f"{result.config.config_id} mean_lambda_star={format_float(result.mean_lambda_star())} failures={len(result.failures)}")
    return EXIT_OK


def cmd_check_theory(args) -> int:
    cfg = read_config(args.config, THEORY_KEYS) if args.config else {}
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    rows = run_theory_suite(seed=seed, mc_n=cfg.get("mc_n", 1_000_000))
    if args.out:
        write_theory_csv(rows, args.out)
    failed = [r for r in rows if not r.passed]
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.scenario_id} {r.candidate} {format_float(r.value)} {r.relation} {format_float(r.target)}")
    for r in failed:
        print(f"check failed: {r.scenario_id}", file=sys.stderr)
    return EXIT_FAILURE if failed else EXIT_OK


# --- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nile", description="Nonlinear IV regression with linear extrapolation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit on a CSV with columns x,y,a and write a JSON artifact")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="artifact path")
    p.add_argument("--seed", type=int, help="seed of the CV fold shuffle (default 0)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a fitted function")
    p.add_argument("fit", help="artifact written by 'nile fit'")
    p.add_argument("--x", type=float, nargs="+", help="points to evaluate")
    p.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "STEP"), help="inclusive grid")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="sample one dataset from a random simulation SCM")
    p.add_argument("--config", help=f"key = value file; keys: {', '.join(sorted(SIMULATE_KEYS))}")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="worst-case risk curves for NILE and the OLS spline")
    p.add_argument("--config", help=f"key = value file; keys: {', '.join(sorted(EXPERIMENT_KEYS))}")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True, help="per-model rows CSV")
    p.add_argument("--summary", help="summary CSV (default: <out>_summary.csv)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check-theory", help="run the linear-SCM theory checks")
    p.add_argument("--config", help=f"key = value file; keys: {', '.join(sorted(THEORY_KEYS))}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=cmd_check_theory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"nile {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
