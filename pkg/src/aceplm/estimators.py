"""DML and ACE point estimates with plug-in inference.

ACE of order ``r`` splits the estimation sample in two.  The first half gives
residual cumulants and hence the polynomial ``J_r``; the second half solves
the moment equation

    sum_i [Y_i - q(X_i) - theta (T_i - g(X_i))] J_r(T_i - g(X_i)) = 0,

which is affine in ``theta``.  The nuisance predictors must come from data
disjoint from the sample passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from aceplm.cumulants import CumulantSet, sample_cumulants
from aceplm.data import Dataset
from aceplm.jpoly import MAX_J_ORDER, JrPolynomial, j_closed_form, j_eval_batch
from aceplm.nuisance import LinearPredictor
from aceplm.partitions import CapacityError

WEAK_ID_RTOL = 1e-12
VARIANCE_MODES = ("moment", "conservative")
SPLIT_MODES = ("random", "sequential")


class DegenerateDesignError(ValueError):
    """Treatment residuals carry no variation."""


class WeakIdentificationError(ArithmeticError):
    """The empirical ACE denominator is numerically zero.

    Happens when the ``(r+1)``-th cumulant of the treatment noise vanishes,
    e.g. for Gaussian noise and any ``r >= 2``.
    """

    def __init__(self, denominator: float, threshold: float, order: int):
        self.denominator = denominator
        self.threshold = threshold
        self.order = order
        super().__init__(
            f"weak identification at order {order}: |denominator| = {abs(denominator):.3e} "
            f"below {threshold:.3e}"
        )


@dataclass(frozen=True)
class AceConfig:
    """ACE settings.

    ``variance`` selects the plug-in for the moment variance: ``"moment"``
    uses the empirical second moment of the estimated moment function at
    ``theta_hat``; ``"conservative"`` uses
    ``mean([(Y-q)^2 + theta^2 (T-g)^2] J^2)``, which bounds it from above.
    """

    order: int = 2
    split_fraction: float = 0.5
    swap_and_average: bool = False
    seed: int = 0
    split_mode: str = "random"
    variance: str = "moment"

    def __post_init__(self):
        if not isinstance(self.order, (int, np.integer)) or not 1 <= self.order <= MAX_J_ORDER:
            raise CapacityError(f"order must be an integer in 1..{MAX_J_ORDER}, got {self.order}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
        if self.variance not in VARIANCE_MODES:
            raise ValueError(f"variance must be one of {VARIANCE_MODES}")


@dataclass(frozen=True)
class AceEstimate:
    """Point estimate, interval and diagnostics.

    ``numerator`` and ``denominator`` are per-sample means over the second
    half, so ``theta_hat * denominator == numerator`` up to rounding.
    """

    theta_hat: float
    std_error: float
    ci: tuple[float, float]
    level: float
    denominator: float
    numerator: float
    v_m_hat: float
    order: int
    n_estimation: int
    cumulants: Optional[CumulantSet] = None
    polynomial: Optional[JrPolynomial] = None

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "std_error": self.std_error,
            "ci_lo": self.ci[0],
            "ci_hi": self.ci[1],
            "level": self.level,
            "order": self.order,
            "denominator": self.denominator,
            "numerator": self.numerator,
            "v_m_hat": self.v_m_hat,
            "n_estimation": self.n_estimation,
            "cumulants": list(self.cumulants.values) if self.cumulants is not None else None,
        }


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def confidence_interval(est, level: float = 0.95) -> tuple[float, float]:
    """``theta_hat +/- z * std_error`` with ``z`` the normal quantile for ``level``."""
    z = _z(level)
    return (est.theta_hat - z * est.std_error, est.theta_hat + z * est.std_error)


def _fsum_mean(a: np.ndarray) -> float:
    return math.fsum(a.tolist()) / a.size


def dml_estimate(data: Dataset, g_hat: LinearPredictor, q_hat: LinearPredictor) -> float:
    """Ratio of ``sum (Y - q)(T - g)`` to ``sum (T - g)^2``."""
    return dml_fit(data, g_hat, q_hat).theta_hat


def dml_fit(
    data: Dataset, g_hat: LinearPredictor, q_hat: LinearPredictor, level: float = 0.95
) -> AceEstimate:
    """DML estimate on the whole sample with a sandwich standard error."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    rt = data.t - g_hat.predict(data.X)
    ry = data.y - q_hat.predict(data.X)
    den_sum = math.fsum((rt * rt).tolist())
    if den_sum == 0.0 or den_sum / data.n < WEAK_ID_RTOL:
        raise DegenerateDesignError(
            f"treatment residuals have mean square {den_sum / data.n:.3e}; T is explained by g_hat"
        )
    num_sum = math.fsum((ry * rt).tolist())
    theta = num_sum / den_sum
    den = den_sum / data.n
    psi = (ry - theta * rt) * rt
    v = _fsum_mean(psi * psi)
    se = math.sqrt(v / data.n) / den
    z = _z(level)
    return AceEstimate(
        theta_hat=theta,
        std_error=se,
        ci=(theta - z * se, theta + z * se),
        level=level,
        denominator=den,
        numerator=num_sum / data.n,
        v_m_hat=v,
        order=1,
        n_estimation=data.n,
    )


def split_indices(n: int, config: AceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the cumulant half and the estimation half.

    The first part gets ``ceil(split_fraction * n)`` rows.
    """
    n1 = math.ceil(config.split_fraction * n)
    n1 = min(max(n1, 1), n - 1)
    if config.split_mode == "sequential":
        order = np.arange(n)
    else:
        order = np.random.default_rng(config.seed).permutation(n)
    return order[:n1], order[n1:]


@dataclass
class _Half:
    theta: float
    num: float
    den: float
    v: float
    n: int
    cumulants: CumulantSet
    poly: JrPolynomial


def _solve_half(rt1, rt2, ry2, r: int, variance: str) -> _Half:
    kappa = sample_cumulants(rt1, r)
    poly = j_closed_form(kappa, r)
    J = j_eval_batch(poly, rt2)
    den_terms = rt2 * J
    den_sum = math.fsum(den_terms.tolist())
    n2 = rt2.size
    den = den_sum / n2
    scale = max(1.0, _fsum_mean(np.abs(rt2) ** (r + 1)))
    threshold = WEAK_ID_RTOL * scale
    if not abs(den) >= threshold:
        raise WeakIdentificationError(den, threshold, r)
    num_sum = math.fsum((ry2 * J).tolist())
    theta = num_sum / den_sum
    if variance == "moment":
        m = (ry2 - theta * rt2) * J
        v = _fsum_mean(m * m)
    else:
        v = _fsum_mean((ry2 * ry2 + theta * theta * rt2 * rt2) * J * J)
    return _Half(theta, num_sum / n2, den, v, n2, kappa, poly)


def ace_estimate(
    data: Dataset,
    g_hat: LinearPredictor,
    q_hat: LinearPredictor,
    config: AceConfig = AceConfig(),
    level: float = 0.95,
) -> AceEstimate:
    """ACE estimate of order ``config.order``.

    Raises
    ------
    WeakIdentificationError
        If the per-sample denominator ``mean((T-g) J_r(T-g))`` on the
        estimation half is below ``1e-12 * max(1, mean|T-g|^(r+1))``.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    rt = data.t - g_hat.predict(data.X)
    ry = data.y - q_hat.predict(data.X)
    return ace_from_residuals(rt, ry, config, level)


def ace_from_residuals(
    rt, ry, config: AceConfig = AceConfig(), level: float = 0.95
) -> AceEstimate:
    """ACE from treatment residuals ``T - g(X)`` and outcome residuals ``Y - q(X)``.

    Use this when the residuals come from cross-fitted nuisances rather than
    a single pair of predictors.
    """
    rt = np.asarray(rt, dtype=float).reshape(-1)
    ry = np.asarray(ry, dtype=float).reshape(-1)
    if rt.size != ry.size:
        raise ValueError("residual vectors differ in length")
    if rt.size < 4:
        raise ValueError(f"ACE needs at least 4 observations, got {rt.size}")
    r = config.order
    i1, i2 = split_indices(rt.size, config)
    first = _solve_half(rt[i1], rt[i2], ry[i2], r, config.variance)
    z = _z(level)
    if not config.swap_and_average:
        theta = first.theta
        se = math.sqrt(first.v / first.n) / abs(first.den)
        return AceEstimate(
            theta_hat=theta,
            std_error=se,
            ci=(theta - z * se, theta + z * se),
            level=level,
            denominator=first.den,
            numerator=first.num,
            v_m_hat=first.v,
            order=r,
            n_estimation=first.n,
            cumulants=first.cumulants,
            polynomial=first.poly,
        )
    second = _solve_half(rt[i2], rt[i1], ry[i1], r, config.variance)
    theta = 0.5 * (first.theta + second.theta)
    var1 = first.v / (first.n * first.den ** 2)
    var2 = second.v / (second.n * second.den ** 2)
    se = 0.5 * math.sqrt(var1 + var2)
    den = 0.5 * (first.den + second.den)
    return AceEstimate(
        theta_hat=theta,
        std_error=se,
        ci=(theta - z * se, theta + z * se),
        level=level,
        denominator=den,
        numerator=den * theta,
        v_m_hat=0.5 * (first.v + second.v),
        order=r,
        n_estimation=rt.size,
        cumulants=first.cumulants,
        polynomial=first.poly,
    )
