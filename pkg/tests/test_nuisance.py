import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aceplm import LassoConfig, LassoDesign, LinearPredictor, lambda_default, lasso_cv, lasso_fit
from aceplm.nuisance import lambda_max, oracle_nuisance, soft_threshold, theoretical_lambda


def orthonormal_design(n, p, seed):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, p)))
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)
    return Q * math.sqrt(n)


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0


@pytest.mark.parametrize("lam", [0.0, 0.05, 0.3, 2.0])
def test_orthonormal_closed_form(lam):
    n, p = 200, 8
    X = orthonormal_design(n, p, 1)
    assert np.allclose(X.T @ X / n, np.eye(p), atol=1e-12)
    rng = np.random.default_rng(2)
    y = X @ rng.uniform(-1, 1, p) + 0.3 * rng.standard_normal(n)
    fit = lasso_fit(X, y, LassoConfig(lam=lam, standardize=False, tol=1e-13))
    expected = [soft_threshold(float(X[:, j] @ (y - y.mean()) / n), lam) for j in range(p)]
    assert np.max(np.abs(fit.coefficients - expected)) <= 1e-10
    assert fit.converged


def test_lambda_zero_is_ols():
    rng = np.random.default_rng(4)
    n, p = 300, 12
    X = rng.standard_normal((n, p)) @ rng.standard_normal((p, p)) * 0.5 + 2.0
    y = X @ rng.standard_normal(p) + 1.5 + rng.standard_normal(n)
    A = np.column_stack([np.ones(n), X])
    sol = np.linalg.solve(A.T @ A, A.T @ y)
    fit = lasso_fit(X, y, LassoConfig(lam=0.0, tol=1e-12, max_iters=100_000))
    assert fit.intercept == pytest.approx(sol[0], abs=1e-8)
    assert np.max(np.abs(fit.coefficients - sol[1:])) <= 1e-8


def test_null_threshold():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((100, 5))
    y = X[:, 0] + rng.standard_normal(100)
    lmax = lambda_max(X, y)
    fit = lasso_fit(X, y, LassoConfig(lam=lmax))
    assert np.all(fit.coefficients == 0.0)
    assert fit.intercept == pytest.approx(y.mean())
    assert np.any(lasso_fit(X, y, LassoConfig(lam=0.9 * lmax)).coefficients != 0.0)


def kkt_violation(X, y, fit, lam):
    design = LassoDesign(X)
    b = fit.coefficients * design.scale
    resid = (y - y.mean()) - design.Xs @ b
    grad = design.Xs.T @ resid / len(y)
    worst = 0.0
    for j in range(len(b)):
        if b[j] == 0.0:
            worst = max(worst, abs(grad[j]) - lam)
        else:
            worst = max(worst, abs(grad[j] - lam * np.sign(b[j])))
    return worst


def test_kkt_random_problems():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, p = int(rng.integers(30, 200)), int(rng.integers(5, 60))
        X = rng.standard_normal((n, p)) * rng.uniform(0.5, 3, p)
        beta = np.where(rng.random(p) < 0.3, rng.standard_normal(p), 0.0)
        y = X @ beta + rng.standard_normal(n)
        lam = float(rng.uniform(0.01, 0.5)) * lambda_max(X, y)
        fit = lasso_fit(X, y, LassoConfig(lam=lam, tol=1e-10))
        assert fit.converged
        assert kkt_violation(X, y, fit, lam) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.001, 0.9))
def test_objective_monotone(seed, frac):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 30))
    y = X[:, :3].sum(axis=1) + rng.standard_normal(60)
    lam = frac * lambda_max(X, y)
    lasso_fit(X, y, LassoConfig(lam=lam, check_objective=True))


def test_deterministic_and_design_reuse():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((150, 20))
    y = X[:, 0] - X[:, 3] + rng.standard_normal(150)
    a = lasso_fit(X, y, LassoConfig(lam=0.05))
    b = lasso_fit(LassoDesign(X), y, LassoConfig(lam=0.05))
    assert a.intercept == b.intercept
    assert np.array_equal(a.coefficients, b.coefficients)


def test_max_iters_reported_not_raised():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((50, 10))
    X[:, 1] = X[:, 0] + 1e-3 * rng.standard_normal(50)
    fit = lasso_fit(X, X[:, 0] + rng.standard_normal(50), LassoConfig(lam=1e-4, max_iters=2))
    assert not fit.converged and fit.n_sweeps == 2


def test_lambda_default():
    assert lambda_default(np.random.default_rng(0).standard_normal((20, 3)), np.full(20, 4.0)) == 0.0
    assert theoretical_lambda(1.0, 10000, 100) == pytest.approx(0.030348, abs=1e-6)
    assert theoretical_lambda(1.0, 10000, 100) / theoretical_lambda(1.0, 20000, 100) == pytest.approx(math.sqrt(2))
    rng = np.random.default_rng(1)
    X = rng.standard_normal((2000, 50))
    y = X[:, :5].sum(axis=1) + rng.standard_normal(2000)
    lam = lambda_default(X, y)
    assert lam == pytest.approx(theoretical_lambda(1.0, 2000, 50), rel=0.1)


def test_lasso_cv_picks_interior_penalty():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((300, 40))
    y = X[:, :4] @ np.array([2.0, -1.0, 1.0, 0.5]) + rng.standard_normal(300)
    lam, fit = lasso_cv(X, y, seed=3)
    assert 0 < lam < lambda_max(X, y)
    assert fit.lam == lam
    assert np.all(np.abs(fit.coefficients[:4]) > 0.3)
    lam_1se, _ = lasso_cv(X, y, seed=3, one_se=True)
    assert lam_1se >= lam
    assert lasso_cv(X, y, seed=3)[0] == lam


def test_predictor_validation():
    g = LinearPredictor(1.0, [1.0, 2.0])
    assert g.predict(np.array([[1.0, 1.0]])).tolist() == [4.0]
    with pytest.raises(ValueError):
        g.predict(np.ones((2, 3)))
    with pytest.raises(ValueError):
        LassoConfig(lam=-1.0)


def test_oracle_nuisance():
    truth = LinearPredictor(0.5, np.r_[np.ones(5), np.zeros(15)])
    assert oracle_nuisance(truth, 0.0) is truth
    for mode in ("additive-function", "coefficient-inflation"):
        g = oracle_nuisance(truth, 0.2, mode, seed=4)
        assert np.linalg.norm(g.coefficients - truth.coefficients) == pytest.approx(0.2, abs=1e-14)
        assert g.intercept == truth.intercept
    with pytest.raises(ValueError):
        oracle_nuisance(truth, 0.1, mode="bogus")


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_oracle_l2_error_monte_carlo(eps):
    rng = np.random.default_rng(12)
    truth = LinearPredictor(0.0, rng.standard_normal(30))
    X = rng.standard_normal((100_000, 30))
    g = oracle_nuisance(truth, eps, seed=1)
    rms = math.sqrt(np.mean((g.predict(X) - truth.predict(X)) ** 2))
    assert abs(rms - eps) <= 0.05 * eps
