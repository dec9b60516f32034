"""Synthetic demand-estimation data and a Monte Carlo harness.

The data-generating process follows the sparse linear partially linear model

    X ~ N(0, I_p),  T = <alpha0, X> + (1 + xi * X_1) * eta,
    Y = theta0 * T + <f, X> + eps,  eps ~ U[-3, 3],

where ``eta`` is, by default, the four-point "price discount" law on
``{0.5, 0, -1.5, -3.5}`` with probabilities ``{0.65, 0.2, 0.1, 0.05}``.
``xi > 0`` makes the treatment noise heteroscedastic in ``X_1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from aceplm.cumulants import MomentSequence, cumulants_to_moments
from aceplm.data import Dataset
from aceplm.estimators import (
    AceConfig,
    DegenerateDesignError,
    WeakIdentificationError,
    ace_estimate,
    dml_fit,
)
from aceplm.nuisance import (
    LassoConfig,
    LassoDesign,
    LinearPredictor,
    lambda_default,
    lasso_cv,
    lasso_fit,
    oracle_nuisance,
)

DEMAND_POINTS = (0.5, 0.0, -1.5, -3.5)
DEMAND_PROBS = (0.65, 0.2, 0.1, 0.05)
NOISE_KINDS = ("demand_discrete", "gaussian", "uniform", "custom")
FAILURE_FLAG_RATE = 0.01


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the treatment noise ``eta``.

    ``gaussian`` uses ``sigma``; ``uniform`` is ``U[-a, a]``; ``custom`` is a
    finite law on ``points`` with ``probs`` and must have mean zero.
    """

    kind: str = "demand_discrete"
    sigma: float = 1.0
    a: float = 1.0
    points: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "points", tuple(float(v) for v in self.points))
        object.__setattr__(self, "probs", tuple(float(v) for v in self.probs))
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian noise needs sigma > 0")
        if self.kind == "uniform" and not self.a > 0:
            raise ValueError("uniform noise needs a > 0")
        if self.kind == "custom":
            pts, prs = self.points, self.probs
            if not pts or len(pts) != len(prs):
                raise ValueError("custom noise needs equally long, nonempty points and probs")
            if any(p < 0 for p in prs) or abs(math.fsum(prs) - 1.0) > 1e-12:
                raise ValueError(f"custom probabilities must be non-negative and sum to 1, got {prs}")
            mean = math.fsum(x * p for x, p in zip(pts, prs))
            if abs(mean) > 1e-12:
                raise ValueError(f"custom noise must have mean zero, got {mean}")

    def _support(self):
        if self.kind == "demand_discrete":
            return DEMAND_POINTS, DEMAND_PROBS
        return self.points, self.probs

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal(n)
        if self.kind == "uniform":
            return rng.uniform(-self.a, self.a, n)
        pts, prs = self._support()
        return np.asarray(pts)[rng.choice(len(pts), size=n, p=np.asarray(prs))]

    def exact_moments(self, max_order: int) -> MomentSequence:
        """Raw moments of ``eta`` of orders ``1..max_order``."""
        if self.kind == "gaussian":
            kappa = [0.0, self.sigma ** 2] + [0.0] * max(0, max_order - 2)
            return cumulants_to_moments(kappa[:max_order])
        if self.kind == "uniform":
            vals = [0.0 if k % 2 else self.a ** k / (k + 1) for k in range(1, max_order + 1)]
            return MomentSequence(tuple(vals))
        pts, prs = self._support()
        vals = [math.fsum(p * x ** k for x, p in zip(pts, prs)) for k in range(1, max_order + 1)]
        return MomentSequence(tuple(vals))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "gaussian":
            out["sigma"] = self.sigma
        elif self.kind == "uniform":
            out["a"] = self.a
        elif self.kind == "custom":
            out["points"] = list(self.points)
            out["probs"] = list(self.probs)
        return out

    @classmethod
    def from_value(cls, value) -> "NoiseSpec":
        if isinstance(value, NoiseSpec):
            return value
        if isinstance(value, str):
            return cls(kind=value)
        return cls(**value)


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design; ``seed`` fixes the nuisance supports (the "truth")."""

    n: int
    p: int = 100
    s: int = 40
    theta0: float = 1.0
    noise: NoiseSpec = NoiseSpec()
    xi: float = 0.0
    coef_scale: float = 1.0
    seed: int = 0
    outcome_noise_halfwidth: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "noise", NoiseSpec.from_value(self.noise))
        if self.n < 1 or self.p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"support size s={self.s} must lie in 0..p={self.p}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        return d


@dataclass(frozen=True)
class Truth:
    theta0: float
    g0: LinearPredictor
    f0: LinearPredictor
    q0: LinearPredictor
    support: tuple[int, ...]


def make_truth(config: DgpConfig) -> Truth:
    """Sparse nuisances on a seeded support shared by ``g0`` and ``f0``.

    ``q0 = E[Y|X] = theta0 * g0 + f0`` is then ``s``-sparse as well.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    support = np.sort(rng.choice(config.p, size=config.s, replace=False))
    alpha = np.zeros(config.p)
    alpha[support] = config.coef_scale
    f = alpha.copy()
    g0 = LinearPredictor(0.0, alpha)
    f0 = LinearPredictor(0.0, f)
    q0 = LinearPredictor(0.0, f + config.theta0 * alpha)
    return Truth(config.theta0, g0, f0, q0, tuple(int(j) for j in support))


def _draw(config: DgpConfig, truth: Truth, ss: np.random.SeedSequence) -> Dataset:
    # X, eta and eps come from separate streams so that xi or the noise law
    # can change without moving the other draws
    sx, se, so = ss.spawn(3)
    n, p = config.n, config.p
    X = np.random.default_rng(sx).standard_normal((n, p))
    eta = config.noise.sample(np.random.default_rng(se), n)
    h = config.outcome_noise_halfwidth
    eps = np.random.default_rng(so).uniform(-h, h, n)
    t = X @ truth.g0.coefficients
    t += (1.0 + config.xi * X[:, 0]) * eta
    y = config.theta0 * t + X @ truth.f0.coefficients + eps
    return Dataset(X, t, y)


def gen_dataset(config: DgpConfig, stream: int = 0) -> tuple[Dataset, Truth]:
    """One sample of size ``config.n``; ``stream`` selects independent draws."""
    truth = make_truth(config)
    ss = np.random.SeedSequence(config.seed, spawn_key=(1, stream))
    return _draw(config, truth, ss), truth


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    order: int = 1

    @property
    def label(self) -> str:
        return "dml" if self.kind == "dml" else f"ace{self.order}"

    @classmethod
    def parse(cls, text) -> "EstimatorSpec":
        if isinstance(text, EstimatorSpec):
            return text
        s = str(text).strip().lower()
        if s == "dml":
            return cls("dml", 1)
        if s.startswith("ace") and s[3:].isdigit():
            order = int(s[3:])
            if not 1 <= order <= 8:
                raise ValueError(f"ACE order must lie in 1..8, got {order}")
            return cls("ace", order)
        raise ValueError(f"unknown estimator {text!r}; use 'dml' or 'aceR' with R in 1..8")


@dataclass(frozen=True)
class NuisancePolicy:
    """How first-stage predictors are obtained in each replicate.

    ``kind="lasso"``: penalty ``lam`` if given, else cross-validated when
    ``cv``, else :func:`lambda_default` with multiplier ``c``.
    ``kind="oracle"``: the truth perturbed to L2 errors ``eps_g``, ``eps_q``.
    ``sample_mode="auxiliary"`` fits on a fresh sample of the same size;
    ``"split"`` carves the first half of one sample for the nuisances.
    """

    kind: str = "lasso"
    lam: Optional[float] = None
    c: float = 1.0
    cv: bool = False
    eps_g: float = 0.0
    eps_q: float = 0.0
    oracle_mode: str = "additive-function"
    sample_mode: str = "auxiliary"
    tol: float = 1e-7
    max_iters: int = 10_000

    def __post_init__(self):
        if self.kind not in ("lasso", "oracle"):
            raise ValueError(f"nuisance policy must be 'lasso' or 'oracle', got {self.kind!r}")
        if self.sample_mode not in ("auxiliary", "split"):
            raise ValueError("sample_mode must be 'auxiliary' or 'split'")

    def lasso_config(self) -> LassoConfig:
        return LassoConfig(tol=self.tol, max_iters=self.max_iters)


def fit_lasso_nuisance(X, y, policy: NuisancePolicy, seed: int = 0) -> LinearPredictor:
    cfg = policy.lasso_config()
    if policy.lam is not None:
        return lasso_fit(X, y, replace(cfg, lam=policy.lam))
    if policy.cv:
        return lasso_cv(X, y, seed=seed, config=cfg)[1]
    return lasso_fit(X, y, replace(cfg, lam=lambda_default(X, y, policy.c, cfg)))


@dataclass(frozen=True)
class ReplicateEstimate:
    replicate: int
    estimator: str
    theta_hat: float
    std_error: float
    ci_lo: float
    ci_hi: float
    covered: Optional[bool]
    failure: str = ""


@dataclass(frozen=True)
class McRow:
    label: str
    rmse: float
    bias: float
    sd: float
    coverage: float
    mean_ci_width: float
    reps: int
    failures: int

    @property
    def failure_rate(self) -> float:
        return self.failures / self.reps if self.reps else 0.0

    @property
    def excess_failures(self) -> bool:
        return self.failure_rate > FAILURE_FLAG_RATE


REPORT_COLUMNS = (
    "label", "rmse", "bias", "sd", "coverage", "mean_ci_width", "reps", "failures",
    "excess_failures",
)
ESTIMATE_COLUMNS = (
    "replicate", "estimator", "theta_hat", "std_error", "ci_lo", "ci_hi", "covered",
)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class McReport:
    rows: list[McRow]
    theta0: float
    level: float
    config: dict
    estimates: list[ReplicateEstimate] = field(default_factory=list)

    def row(self, label: str) -> McRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "level": self.level,
            "config": self.config,
            "rows": [
                {**asdict(r), "excess_failures": r.excess_failures} for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def rows_csv(self, extra: Optional[dict] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = extra or {}
        w.writerow(list(extra) + list(REPORT_COLUMNS))
        for r in self.rows:
            vals = [getattr(r, c) for c in REPORT_COLUMNS]
            w.writerow([_fmt(v) for v in list(extra.values()) + vals])
        return buf.getvalue()

    def estimates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ESTIMATE_COLUMNS)
        for e in self.estimates:
            covered = "" if e.covered is None else _fmt(e.covered)
            w.writerow([
                e.replicate, e.estimator, _fmt(e.theta_hat), _fmt(e.std_error),
                _fmt(e.ci_lo), _fmt(e.ci_hi), covered,
            ])
        return buf.getvalue()


def summarize(label: str, estimates: Sequence[ReplicateEstimate], theta0: float) -> McRow:
    """RMSE, bias, population SD and coverage over non-failed replicates."""
    ok = [e for e in estimates if not e.failure]
    failures = len(estimates) - len(ok)
    if not ok:
        nan = float("nan")
        return McRow(label, nan, nan, nan, nan, nan, len(estimates), failures)
    m = len(ok)
    errs = [e.theta_hat - theta0 for e in ok]
    bias = math.fsum(errs) / m
    mse = math.fsum(x * x for x in errs) / m
    var = math.fsum((x - bias) ** 2 for x in errs) / m
    coverage = sum(1 for e in ok if e.covered) / m
    width = math.fsum(e.ci_hi - e.ci_lo for e in ok) / m
    return McRow(label, math.sqrt(mse), bias, math.sqrt(var), coverage, width,
                 len(estimates), failures)


@dataclass(frozen=True)
class _Job:
    config: DgpConfig
    truth: Truth
    estimators: tuple[EstimatorSpec, ...]
    policy: NuisancePolicy
    base_seed: int
    level: float
    ace: AceConfig


def _fail(k, label, reason) -> ReplicateEstimate:
    nan = float("nan")
    return ReplicateEstimate(k, label, nan, nan, nan, nan, None, reason)


def _run_replicate(job: _Job, k: int) -> list[ReplicateEstimate]:
    ss = np.random.SeedSequence(job.base_seed, spawn_key=(1, k))
    s_est, s_aux, s_split, s_oracle = ss.spawn(4)
    cfg, truth, policy = job.config, job.truth, job.policy
    if policy.kind == "lasso" and policy.sample_mode == "split":
        full = _draw(replace(cfg, n=2 * cfg.n), truth, s_est)
        aux, data = full.subset(np.arange(cfg.n)), full.subset(np.arange(cfg.n, 2 * cfg.n))
    else:
        data = _draw(cfg, truth, s_est)
        aux = _draw(cfg, truth, s_aux) if policy.kind == "lasso" else None
    if policy.kind == "lasso":
        fold_seed = int(s_aux.generate_state(1)[0])
        design = LassoDesign(aux.X)
        g_hat = fit_lasso_nuisance(design, aux.t, policy, fold_seed)
        q_hat = fit_lasso_nuisance(design, aux.y, policy, fold_seed)
    else:
        og, oq = (int(v) for v in s_oracle.generate_state(2))
        g_hat = oracle_nuisance(truth.g0, policy.eps_g, policy.oracle_mode, og)
        q_hat = oracle_nuisance(truth.q0, policy.eps_q, policy.oracle_mode, oq)
    split_seed = int(s_split.generate_state(1)[0])
    out = []
    for spec in job.estimators:
        try:
            if spec.kind == "dml":
                est = dml_fit(data, g_hat, q_hat, job.level)
            else:
                acfg = replace(job.ace, order=spec.order, seed=split_seed)
                est = ace_estimate(data, g_hat, q_hat, acfg, job.level)
        except WeakIdentificationError:
            out.append(_fail(k, spec.label, "weak_identification"))
            continue
        except DegenerateDesignError:
            out.append(_fail(k, spec.label, "degenerate_design"))
            continue
        lo, hi = est.ci
        out.append(ReplicateEstimate(k, spec.label, est.theta_hat, est.std_error, lo, hi,
                                     bool(lo <= cfg.theta0 <= hi)))
    return out


def _run_chunk(job: _Job, ks: Sequence[int]) -> list[list[ReplicateEstimate]]:
    return [_run_replicate(job, k) for k in ks]


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("ACE_THREADS", "1") or 1)
    return max(1, int(threads))


def run_monte_carlo(
    config: DgpConfig,
    estimators: Sequence,
    reps: int,
    policy: NuisancePolicy = NuisancePolicy(),
    base_seed: int = 0,
    level: float = 0.95,
    ace: AceConfig = AceConfig(),
    threads: Optional[int] = 1,
) -> McReport:
    """Repeat the experiment ``reps`` times and aggregate per estimator.

    Replicate ``k`` draws from ``SeedSequence(base_seed, spawn_key=(1, k))``,
    so any prefix of a run reproduces a shorter run exactly and results do
    not depend on the number of worker processes.  All estimators in a
    replicate share the data, nuisances and sample split.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    specs = tuple(EstimatorSpec.parse(e) for e in estimators)
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate estimators in {labels}")
    job = _Job(config, make_truth(config), specs, policy, base_seed, level, ace)
    threads = resolve_threads(threads)
    if threads == 1:
        per_rep = [_run_replicate(job, k) for k in range(reps)]
    else:
        chunks = [list(c) for c in np.array_split(np.arange(reps), min(reps, 4 * threads))]
        chunks = [[int(k) for k in c] for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_run_chunk, [job] * len(chunks), chunks))
        per_rep = [r for part in parts for r in part]
    flat = [e for rep in per_rep for e in rep]
    rows = [summarize(lab, [e for e in flat if e.estimator == lab], config.theta0) for lab in labels]
    meta = {
        "dgp": config.to_dict(),
        "estimators": labels,
        "reps": reps,
        "base_seed": base_seed,
        "nuisance": asdict(policy),
        "ace": {k: v for k, v in asdict(ace).items() if k not in ("order", "seed")},
    }
    return McReport(rows, config.theta0, level, meta, flat)


SWEEP_AXES = ("n", "xi", "s", "epsilon")


def sweep(
    axis: str,
    grid: Sequence,
    config: DgpConfig,
    estimators: Sequence,
    reps: int,
    policy: NuisancePolicy = NuisancePolicy(),
    base_seed: int = 0,
    level: float = 0.95,
    ace: AceConfig = AceConfig(),
    threads: Optional[int] = 1,
) -> list[tuple[float, McReport]]:
    """One Monte Carlo run per grid value, all with the same ``base_seed``.

    ``epsilon`` sets both oracle errors and requires an oracle policy.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if len(grid) == 0:
        raise ValueError("grid is empty")
    if axis == "epsilon" and policy.kind != "oracle":
        raise ValueError("an epsilon sweep needs an oracle nuisance policy")
    out = []
    for value in grid:
        cfg, pol = config, policy
        if axis == "n":
            cfg = replace(config, n=int(value))
        elif axis == "s":
            cfg = replace(config, s=int(value))
        elif axis == "xi":
            cfg = replace(config, xi=float(value))
        else:
            pol = replace(policy, eps_g=float(value), eps_q=float(value))
        out.append((value, run_monte_carlo(cfg, estimators, reps, pol, base_seed, level, ace, threads)))
    return out


def sweep_csv(axis: str, results: Sequence[tuple[float, McReport]]) -> str:
    parts = []
    for i, (value, report) in enumerate(results):
        text = report.rows_csv({axis: value})
        parts.append(text if i == 0 else text.split("\n", 1)[1])
    return "".join(parts)
