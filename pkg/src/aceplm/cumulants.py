"""Empirical moments, moment/cumulant conversion and residual cumulants.

The residual cumulant estimator is the plain cumulant of the empirical law of
``T - g_hat(X)``.  Because cumulants of order two and up ignore location, an
additive error in ``g_hat`` leaves them untouched, and an independent error
only adds its own (small, high-order) cumulants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from aceplm.partitions import partition_weighted_sum

if TYPE_CHECKING:
    from aceplm.data import Dataset
    from aceplm.nuisance import LinearPredictor

DEFAULT_MAX_ORDER = 9


@dataclass(frozen=True)
class MomentSequence:
    """Raw moments ``mu'_1 .. mu'_K``.

    ``origin`` is ``"empirical"`` (then ``n`` is the sample count) or
    ``"exact"`` for moments of a known law.
    """

    values: tuple[float, ...]
    origin: str = "exact"
    n: Optional[int] = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("a moment sequence needs at least one order")
        if self.origin not in ("empirical", "exact"):
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.origin == "empirical" and len(vals) >= 2:
            slack = 1e-12 * max(1.0, abs(vals[1]))
            if vals[1] - vals[0] ** 2 < -slack:
                raise ValueError(
                    f"second moment {vals[1]} is below the squared mean {vals[0] ** 2}"
                )
        object.__setattr__(self, "values", vals)

    @property
    def max_order(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int) -> float:
        """Moment of order ``k`` (1-based); order 0 is 1."""
        if k == 0:
            return 1.0
        if k < 0:
            raise IndexError(k)
        return self.values[k - 1]


@dataclass(frozen=True)
class CumulantSet:
    """Cumulants ``kappa_1 .. kappa_K`` with the moments they were computed from."""

    values: tuple[float, ...]
    source_moments: Optional[MomentSequence] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def max_order(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int) -> float:
        """Cumulant of order ``k`` (1-based)."""
        if k < 1:
            raise IndexError(k)
        return self.values[k - 1]

    def __len__(self) -> int:
        return len(self.values)


def _values(seq) -> tuple[float, ...]:
    if isinstance(seq, (MomentSequence, CumulantSet)):
        return seq.values
    return tuple(float(v) for v in seq)


def raw_moments(samples, max_order: int) -> MomentSequence:
    """Empirical raw moments ``(1/n) sum s_i**k`` for ``k = 1..max_order``.

    Sums are correctly rounded (``math.fsum``), so the result does not depend
    on sample order.
    """
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("cannot compute moments of an empty sample")
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples contain non-finite values")
    n = s.size
    vals = []
    power = np.ones_like(s)
    for _ in range(max_order):
        power = power * s
        vals.append(math.fsum(power.tolist()) / n)
    return MomentSequence(tuple(vals), origin="empirical", n=n)


def moments_to_cumulants(moments) -> CumulantSet:
    """Cumulants from raw moments by the standard recursion.

    ``kappa_k = mu'_k - sum_{j<k} C(k-1, j-1) mu'_{k-j} kappa_j``.
    """
    mu = _values(moments)
    if len(mu) < 1:
        raise ValueError("need at least one moment")
    kappa: list[float] = []
    for k in range(1, len(mu) + 1):
        acc = [mu[k - 1]]
        for j in range(1, k):
            acc.append(-math.comb(k - 1, j - 1) * mu[k - j - 1] * kappa[j - 1])
        kappa.append(math.fsum(acc))
    src = moments if isinstance(moments, MomentSequence) else MomentSequence(mu)
    return CumulantSet(tuple(kappa), src)


def cumulants_to_moments(cumulants) -> MomentSequence:
    """Raw moments from cumulants: ``mu_m = sum over partitions of prod kappa_|B|``."""
    kappa = _values(cumulants)
    if len(kappa) < 1:
        raise ValueError("need at least one cumulant")
    vals = tuple(
        partition_weighted_sum(m, kappa, signed=False) for m in range(1, len(kappa) + 1)
    )
    return MomentSequence(vals, origin="exact")


def _lower_median(r: np.ndarray) -> float:
    k = (r.size - 1) // 2
    return float(np.partition(r, k)[k])


def sample_cumulants(samples, max_order: int = DEFAULT_MAX_ORDER) -> CumulantSet:
    """Cumulants of the empirical distribution of ``samples``.

    Orders two and up are computed from the sample shifted by one of its own
    order statistics.  Shifting every sample by an exactly representable
    constant therefore moves the pivot by the same constant and leaves those
    cumulants bit-for-bit unchanged; it also keeps the high powers small.
    """
    r = np.asarray(samples, dtype=float).reshape(-1)
    source = raw_moments(r, max_order)
    pivot = _lower_median(r)
    shifted = moments_to_cumulants(raw_moments(r - pivot, max_order)).values
    values = (source.values[0],) + shifted[1:]
    return CumulantSet(values, source)


def residual_cumulants(
    data: "Dataset", g_hat: "LinearPredictor", max_order: int = DEFAULT_MAX_ORDER
) -> CumulantSet:
    """Cumulants of the empirical law of the treatment residuals ``T - g_hat(X)``."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    residuals = data.t - g_hat.predict(data.X)
    return sample_cumulants(residuals, max_order)


def debiased_moments(moments) -> np.ndarray:
    """``theta_1 = 0`` and ``theta_k = mu'_k - k * theta_{k-1} * mu'_1``."""
    mu = _values(moments)
    if len(mu) < 1:
        raise ValueError("need at least one moment")
    theta = np.zeros(len(mu))
    for k in range(2, len(mu) + 1):
        theta[k - 1] = mu[k - 1] - k * theta[k - 2] * mu[0]
    return theta


def cubic_estimators(residuals) -> tuple[float, float]:
    """Third-order estimators ``(psi, nu)`` from residuals.

    ``psi = m3 - 3 m2 m1`` removes the first-order effect of a mean shift in
    the residuals; ``nu = m3`` is the naive third moment.
    """
    m1, m2, m3 = raw_moments(residuals, 3).values
    return m3 - 3.0 * m2 * m1, m3
