"""Command-line driver: ``aceplm {simulate,estimate,papersuite,generate}``.

Every failure prints one line ``error[<reason>]: <detail>`` to stderr and
exits nonzero: 2 for invalid input, 3 for I/O, 4 for estimation failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from aceplm.estimators import (
    AceConfig,
    DegenerateDesignError,
    WeakIdentificationError,
    ace_from_residuals,
)
from aceplm.nuisance import LassoConfig, LassoDesign, lambda_default, lasso_cv, lasso_fit
from aceplm.simulate import (
    DgpConfig,
    NoiseSpec,
    NuisancePolicy,
    gen_dataset,
    run_monte_carlo,
    sweep,
    sweep_csv,
)

EXIT_INPUT = 2
EXIT_IO = 3
EXIT_ESTIMATION = 4


class CliError(Exception):
    def __init__(self, reason: str, detail: str, code: int):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail
        self.code = code


_NOISE_SCHEMA = {
    "oneOf": [
        {"type": "string", "enum": ["demand_discrete", "gaussian", "uniform"]},
        {
            "type": "object",
            "properties": {
                "kind": {"enum": ["demand_discrete", "gaussian", "uniform", "custom"]},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 4},
        "p": {"type": "integer", "minimum": 1},
        "s": {"type": "integer", "minimum": 0},
        "theta0": {"type": "number"},
        "noise": _NOISE_SCHEMA,
        "xi": {"type": "number"},
        "coef_scale": {"type": "number"},
        "seed": {"type": "integer", "minimum": 0},
        "estimators": {
            "type": "array",
            "items": {"type": "string", "pattern": "^(dml|ace[1-8])$"},
            "minItems": 1,
            "uniqueItems": True,
        },
        "reps": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer", "minimum": 0},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "nuisance": {
            "type": "object",
            "properties": {
                "policy": {"enum": ["lasso", "oracle"]},
                "lambda": {"type": "number", "minimum": 0},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "cv": {"type": "boolean"},
                "eps_g": {"type": "number", "minimum": 0},
                "eps_q": {"type": "number", "minimum": 0},
                "oracle_mode": {"enum": ["coefficient-inflation", "additive-function"]},
                "sample_mode": {"enum": ["auxiliary", "split"]},
            },
            "required": ["policy"],
            "additionalProperties": False,
        },
        "ace": {
            "type": "object",
            "properties": {
                "split_mode": {"enum": ["random", "sequential"]},
                "swap_and_average": {"type": "boolean"},
                "variance": {"enum": ["moment", "conservative"]},
                "split_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
            "additionalProperties": False,
        },
        "out": {"type": "string"},
    },
    "required": ["n", "noise", "estimators", "reps"],
    "additionalProperties": False,
}


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path)
    return f"{where}: {err.message}" if where else err.message


def validate_scenario(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise CliError("schema", _schema_message(errors[0]), EXIT_INPUT)


@dataclass
class Scenario:
    dgp: DgpConfig
    estimators: list[str]
    reps: int
    policy: NuisancePolicy
    base_seed: int
    level: float
    ace: AceConfig
    out: Optional[str]


def parse_scenario(doc: dict) -> Scenario:
    validate_scenario(doc)
    try:
        dgp = DgpConfig(
            n=doc["n"],
            p=doc.get("p", 100),
            s=doc.get("s", 40),
            theta0=doc.get("theta0", 1.0),
            noise=NoiseSpec.from_value(doc["noise"]),
            xi=doc.get("xi", 0.0),
            coef_scale=doc.get("coef_scale", 1.0),
            seed=doc.get("seed", 0),
        )
        nz = doc.get("nuisance", {"policy": "lasso"})
        policy = NuisancePolicy(
            kind=nz["policy"],
            lam=nz.get("lambda"),
            c=nz.get("c", 1.0),
            cv=nz.get("cv", False),
            eps_g=nz.get("eps_g", 0.0),
            eps_q=nz.get("eps_q", 0.0),
            oracle_mode=nz.get("oracle_mode", "additive-function"),
            sample_mode=nz.get("sample_mode", "auxiliary"),
        )
        ace = AceConfig(**doc.get("ace", {}))
    except ValueError as exc:
        raise CliError("schema", str(exc), EXIT_INPUT) from exc
    return Scenario(dgp, list(doc["estimators"]), doc["reps"], policy,
                    doc.get("base_seed", 0), doc.get("level", 0.95), ace, doc.get("out"))


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from exc


def cmd_simulate(args) -> int:
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("io", f"cannot read {args.scenario}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError("schema", f"invalid JSON at line {exc.lineno}: {exc.msg}", EXIT_INPUT) from exc
    sc = parse_scenario(doc)
    out = Path(args.out or sc.out or ".")
    report = run_monte_carlo(sc.dgp, sc.estimators, sc.reps, sc.policy, sc.base_seed,
                             sc.level, sc.ace, args.threads)
    _write(out / "report.csv", report.rows_csv())
    _write(out / "report.json", report.to_json())
    _write(out / "estimates.csv", report.estimates_csv())
    _check_failures([report])
    return 0


def _check_failures(reports) -> None:
    """Outputs are kept, but any failed replicate makes the run exit nonzero."""
    failed: dict[str, int] = {}
    for rep in reports:
        for row in rep.rows:
            if row.failures:
                failed[row.label] = failed.get(row.label, 0) + row.failures
    if failed:
        detail = ", ".join(f"{k}={v}" for k, v in failed.items())
        raise CliError("estimator", f"failed replicates: {detail}", EXIT_ESTIMATION)


def read_data_csv(path: str):
    """Parse a ``x1..xp,t,y`` CSV; errors name the offending line."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc
    if not rows:
        raise CliError("data", "line 1: missing header", EXIT_INPUT)
    header = [h.strip() for h in rows[0]]
    p = len(header) - 2
    expected = [f"x{j}" for j in range(1, p + 1)] + ["t", "y"]
    if p < 1 or header != expected:
        raise CliError("data", f"line 1: header must be x1..xp,t,y, got {','.join(header)}", EXIT_INPUT)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CliError("data", f"line {lineno}: expected {len(header)} fields, got {len(row)}", EXIT_INPUT)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise CliError("data", f"line {lineno}: non-numeric cell {bad!r}", EXIT_INPUT) from None
        if not all(math.isfinite(v) for v in vals):
            raise CliError("data", f"line {lineno}: non-finite cell", EXIT_INPUT)
        values.append(vals)
    if len(values) < 4:
        raise CliError("data", f"need at least 4 data rows, got {len(values)}", EXIT_INPUT)
    arr = np.array(values)
    return arr[:, :p], arr[:, p], arr[:, p + 1]


def _is_float(c: str) -> bool:
    try:
        float(c)
    except ValueError:
        return False
    return True


def _fit(design, y, lam, cv, seed):
    if lam is not None:
        return lasso_fit(design, y, LassoConfig(lam=lam))
    if cv:
        return lasso_cv(design, y, n_folds=min(5, design.n), seed=seed)[1]
    return lasso_fit(design, y, LassoConfig(lam=lambda_default(design, y)))


def cmd_estimate(args) -> int:
    X, t, y = read_data_csv(args.data)
    n = X.shape[0]
    # two-fold cross-fitting: each residual uses nuisances fitted on the other fold
    folds = np.array_split(np.random.default_rng(args.seed).permutation(n), 2)
    rt = np.empty(n)
    ry = np.empty(n)
    lambdas = []
    for k in range(2):
        fit_idx, res_idx = folds[1 - k], folds[k]
        design = LassoDesign(X[fit_idx])
        g = _fit(design, t[fit_idx], args.lam, args.cv, args.seed)
        q = _fit(design, y[fit_idx], args.lam, args.cv, args.seed)
        lambdas.append({"g": g.lam, "q": q.lam})
        rt[res_idx] = t[res_idx] - g.predict(X[res_idx])
        ry[res_idx] = y[res_idx] - q.predict(X[res_idx])
    try:
        config = AceConfig(order=args.order, seed=args.seed, swap_and_average=args.swap)
        est = ace_from_residuals(rt, ry, config, args.level)
    except WeakIdentificationError as exc:
        raise CliError("weak_identification", str(exc), EXIT_ESTIMATION) from exc
    except (ValueError, DegenerateDesignError) as exc:
        raise CliError("estimation", str(exc), EXIT_ESTIMATION) from exc
    out = est.to_dict()
    out["n"] = n
    out["lambdas"] = lambdas
    sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


# reps, grid, estimators and dgp overrides per suite and scale
SUITES = {
    "fig1": {
        "axis": "n",
        "dgp": {"n": 20000},
        "desk": {"grid": [2000, 5000, 10000, 20000], "reps": 500,
                 "estimators": ["ace1", "ace2", "ace3", "ace5"]},
        "full": {"grid": [2000, 4000, 8000, 12000, 16000, 20000], "reps": 20000,
                 "estimators": ["ace1", "ace2", "ace3", "ace4", "ace5"]},
    },
    "correlation": {
        "axis": "xi",
        "dgp": {"n": 20000},
        "desk": {"grid": [0.0, 0.05, 0.1, 0.2, 0.3], "reps": 200,
                 "estimators": ["ace1", "ace2", "ace5"]},
        "full": {"grid": [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3], "reps": 2000,
                 "estimators": ["ace1", "ace2", "ace3", "ace4", "ace5", "ace6"]},
    },
    "sparsity": {
        "axis": "s",
        "dgp": {"n": 10000, "p": 1000},
        "desk": {"grid": [40, 100, 200], "reps": 100,
                 "estimators": ["ace1", "ace2", "ace5"]},
        "full": {"grid": [40, 100, 200, 300, 400], "reps": 2000,
                 "estimators": ["ace1", "ace2", "ace3", "ace4", "ace5", "ace6"]},
    },
}


def suite_plan(suite: str, scale: str, reps: Optional[int] = None):
    suite_def = SUITES[suite]
    plan = suite_def[scale]
    dgp = DgpConfig(**suite_def["dgp"])
    return suite_def["axis"], list(plan["grid"]), dgp, list(plan["estimators"]), reps or plan["reps"]


def cmd_papersuite(args) -> int:
    axis, grid, dgp, estimators, reps = suite_plan(args.suite, args.scale, args.reps)
    results = sweep(axis, grid, dgp, estimators, reps, NuisancePolicy(),
                    base_seed=args.seed, threads=args.threads)
    out = Path(args.out)
    doc = {
        "suite": args.suite,
        "scale": args.scale,
        "axis": axis,
        "points": [{"value": v, "report": r.to_dict()} for v, r in results],
    }
    _write(out / f"{args.suite}.csv", sweep_csv(axis, results))
    _write(out / f"{args.suite}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _check_failures([r for _, r in results])
    return 0


def cmd_generate(args) -> int:
    try:
        cfg = DgpConfig(n=args.n, p=args.p, s=args.s, theta0=args.theta0,
                        noise=NoiseSpec.from_value(args.noise), xi=args.xi, seed=args.seed)
    except ValueError as exc:
        raise CliError("schema", str(exc), EXIT_INPUT) from exc
    data, _ = gen_dataset(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(1, cfg.p + 1)] + ["t", "y"])
    for i in range(data.n):
        w.writerow([repr(float(v)) for v in data.X[i]] + [repr(float(data.t[i])), repr(float(data.y[i]))])
    _write(Path(args.out), buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aceplm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario from a JSON file")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="ACE on a CSV with columns x1..xp,t,y")
    p.add_argument("--data", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--swap", action="store_true", help="swap the halves and average")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, default=None)
    g.add_argument("--cv", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("papersuite", help="preconfigured experiment sweeps")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--scale", choices=["desk", "full"], default="desk")
    p.add_argument("--out", required=True)
    p.add_argument("--reps", type=int, default=None, help="override the replicate count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_papersuite)

    p = sub.add_parser("generate", help="write one simulated dataset as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--s", type=int, default=40)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--noise", default="demand_discrete",
                   choices=["demand_discrete", "gaussian", "uniform"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        detail = " ".join(exc.detail.split())
        print(f"error[{exc.reason}]: {detail}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
