"""First-stage nuisance estimates: linear predictors, Lasso, oracle perturbations."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class LinearPredictor:
    """``x -> intercept + <coefficients, x>``.

    ``converged`` and ``n_sweeps`` are only meaningful for fitted predictors.
    """

    intercept: float
    coefficients: np.ndarray
    converged: bool = True
    n_sweeps: int = 0
    lam: Optional[float] = None

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def p(self) -> int:
        return self.coefficients.size

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.p:
            raise ValueError(f"predictor has {self.p} coefficients but X has {X.shape[1]} columns")
        return self.intercept + X @ self.coefficients

    def shifted(self, c: float) -> "LinearPredictor":
        return replace(self, intercept=self.intercept + c)


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 0.0
    max_iters: int = 10_000
    tol: float = 1e-7
    standardize: bool = True
    # recompute the objective after every sweep and fail if it increases
    check_objective: bool = False

    def __post_init__(self):
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError(f"lam must be a finite non-negative number, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _validate_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n < 2 or p < 1:
        raise ValueError(f"need n >= 2 and p >= 1, got X of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    return X


class LassoDesign:
    """Centered, optionally standardized design with its Gram matrix.

    Build once and pass in place of ``X`` to fit several responses on the
    same covariates.
    """

    def __init__(self, X, standardize: bool = True):
        X = _validate_X(X)
        n = X.shape[0]
        self.n, self.p = X.shape
        self.standardize = standardize
        self.x_mean = X.mean(axis=0)
        Xc = X - self.x_mean
        if standardize:
            scale = np.sqrt(np.mean(Xc * Xc, axis=0))
            scale[scale == 0] = 1.0
        else:
            scale = np.ones(self.p)
        self.scale = scale
        self.Xs = Xc / scale
        self.G = self.Xs.T @ self.Xs / n
        self.X = X

    def problem(self, y) -> "_Problem":
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != self.n:
            raise ValueError(f"y has {y.size} entries, X has {self.n} rows")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        return _Problem(self, y)


def _design(X, standardize: bool) -> LassoDesign:
    if isinstance(X, LassoDesign):
        if X.standardize != standardize:
            raise ValueError("design was prepared with a different standardize setting")
        return X
    return LassoDesign(X, standardize)


class _Problem:
    """One response on a prepared design."""

    def __init__(self, design: LassoDesign, y: np.ndarray):
        self.design = design
        self.G = design.G
        self.y_mean = float(y.mean())
        yc = y - self.y_mean
        self.c = design.Xs.T @ yc / design.n
        self.yy = float(yc @ yc) / design.n

    def objective(self, b: np.ndarray, lam: float) -> float:
        quad = self.yy - 2.0 * float(self.c @ b) + float(b @ self.G @ b)
        return 0.5 * quad + lam * float(np.abs(b).sum())

    def to_predictor(self, b, converged, sweeps, lam) -> LinearPredictor:
        coef = b / self.design.scale
        intercept = self.y_mean - float(self.design.x_mean @ coef)
        return LinearPredictor(intercept, coef, converged, sweeps, lam)


def _coordinate_descent(prob: _Problem, config: LassoConfig, b0=None):
    G, lam = prob.G, config.lam
    p = G.shape[0]
    diag = np.diag(G).tolist()
    b = np.zeros(p) if b0 is None else np.array(b0, dtype=float)
    grad = prob.c - G @ b  # <x_j, residual>/n
    bl = b.tolist()
    full = list(range(p))
    coords = full
    sweeps = 0
    converged = False
    prev_obj = prob.objective(b, lam) if config.check_objective else None
    while sweeps < config.max_iters:
        sweeps += 1
        max_step = 0.0
        for j in coords:
            gjj = diag[j]
            if gjj <= 0.0:
                continue
            old = bl[j]
            new = soft_threshold(float(grad[j]) + gjj * old, lam) / gjj
            if new != old:
                delta = new - old
                grad -= G[j] * delta
                bl[j] = new
                if abs(delta) > max_step:
                    max_step = abs(delta)
        if config.check_objective:
            b = np.array(bl)
            obj = prob.objective(b, lam)
            if obj > prev_obj + 1e-12 * max(1.0, abs(prev_obj)):
                raise AssertionError(
                    f"Lasso objective increased from {prev_obj!r} to {obj!r} at sweep {sweeps}"
                )
            prev_obj = obj
        if max_step < config.tol:
            if coords is full:
                converged = True
                break
            coords = full
        else:
            active = [j for j in full if bl[j] != 0.0]
            coords = active if coords is full and active else coords
    return np.array(bl), converged, sweeps


def lasso_fit(X, y, config: LassoConfig = LassoConfig()) -> LinearPredictor:
    """Lasso by cyclic coordinate descent on the Gram matrix.

    Minimizes ``(1/2n)||y - b0 - X b||^2 + lam ||b||_1`` with an unpenalized
    intercept.  With ``standardize`` the penalty applies to coefficients of
    unit-variance columns; the returned coefficients are on the original
    scale.  Sweeps alternate between the active set and full passes; the fit
    is declared converged when a full pass moves no coefficient by more than
    ``tol``.  Running out of ``max_iters`` sweeps is reported through
    ``converged=False`` rather than raised.
    """
    prob = _design(X, config.standardize).problem(y)
    b, converged, sweeps = _coordinate_descent(prob, config)
    return prob.to_predictor(b, converged, sweeps, config.lam)


def lambda_max(X, y, standardize: bool = True) -> float:
    """Smallest penalty at which every coefficient is zero."""
    prob = _design(X, standardize).problem(y)
    return float(np.max(np.abs(prob.c)))


def theoretical_lambda(sigma: float, n: int, p: int, c: float = 1.0) -> float:
    """``c * sigma * sqrt(2 log p / n)``."""
    return c * sigma * math.sqrt(2.0 * math.log(p) / n)


def lambda_default(X, y, c: float = 1.0, config: LassoConfig = LassoConfig()) -> float:
    """Noise-scaled penalty ``c * sigma_hat * sqrt(2 log p / n)``.

    ``sigma_hat`` starts at the standard deviation of ``y`` and is refreshed
    once from the residuals of a fit at the starting penalty.
    """
    design = _design(X, config.standardize)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = design.n, design.p
    sigma0 = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    if sigma0 == 0.0:
        return 0.0
    lam0 = theoretical_lambda(sigma0, n, p, c)
    fit = lasso_fit(design, y, replace(config, lam=lam0))
    resid = y - fit.predict(design.X)
    sigma = float(np.sqrt(np.mean(resid * resid)))
    return theoretical_lambda(sigma, n, p, c)


def lasso_cv(
    X,
    y,
    n_folds: int = 5,
    n_lambdas: int = 30,
    min_ratio: float = 1e-3,
    seed: int = 0,
    one_se: bool = False,
    config: LassoConfig = LassoConfig(),
) -> tuple[float, LinearPredictor]:
    """K-fold cross-validated penalty; returns ``(lam, fit on all data)``.

    The grid is geometric from :func:`lambda_max` down to
    ``min_ratio * lambda_max`` and each fold walks it with warm starts.
    """
    design = _design(X, config.standardize)
    X = design.X
    y = np.asarray(y, dtype=float).reshape(-1)
    n = design.n
    if n_folds < 2 or n_folds > n:
        raise ValueError(f"n_folds must lie in 2..{n}")
    lmax = lambda_max(design, y, config.standardize)
    if lmax == 0.0:
        return 0.0, lasso_fit(design, y, replace(config, lam=0.0))
    grid = lmax * np.geomspace(1.0, min_ratio, n_lambdas)
    folds = np.array_split(np.random.default_rng(seed).permutation(n), n_folds)
    errors = np.zeros((n_folds, n_lambdas))
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test)
        prob = LassoDesign(X[train], config.standardize).problem(y[train])
        b = None
        for i, lam in enumerate(grid):
            b, conv, sweeps = _coordinate_descent(prob, replace(config, lam=float(lam)), b)
            pred = prob.to_predictor(b, conv, sweeps, float(lam)).predict(X[test])
            errors[f, i] = np.mean((y[test] - pred) ** 2)
    mean_err = errors.mean(axis=0)
    best = int(np.argmin(mean_err))
    if one_se:
        se = errors.std(axis=0, ddof=1) / math.sqrt(n_folds)
        ok = np.nonzero(mean_err <= mean_err[best] + se[best])[0]
        best = int(ok.min())
    lam = float(grid[best])
    return lam, lasso_fit(design, y, replace(config, lam=lam))


ORACLE_MODES = ("coefficient-inflation", "additive-function")


def oracle_nuisance(
    truth: LinearPredictor,
    epsilon: float,
    mode: str = "additive-function",
    seed: int = 0,
) -> LinearPredictor:
    """Perturb ``truth`` so its ``L2(N(0, I))`` error is exactly ``epsilon``.

    Under isotropic Gaussian covariates the ``L2`` distance between two linear
    predictors with equal intercepts is the Euclidean distance of their
    coefficients.  ``additive-function`` adds ``epsilon`` times a seeded random
    unit direction; ``coefficient-inflation`` stretches the true coefficient
    vector by ``epsilon`` along itself (random direction if it is zero).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if mode not in ORACLE_MODES:
        raise ValueError(f"mode must be one of {ORACLE_MODES}, got {mode!r}")
    if epsilon == 0:
        return truth
    coef = truth.coefficients
    norm = float(np.linalg.norm(coef))
    if mode == "coefficient-inflation" and norm > 0:
        direction = coef / norm
    else:
        direction = np.random.default_rng(seed).standard_normal(coef.size)
        direction /= np.linalg.norm(direction)
    return LinearPredictor(truth.intercept, coef + epsilon * direction)
