"""The orthogonalizing polynomial ``J_r`` and its expected derivatives.

``J_r`` is built from ``J_1(w) = w`` by repeatedly integrating from 0 and
subtracting the expectation under the residual law.  The result is a degree-r
polynomial whose coefficients are signed partition sums of cumulants, which is
what :func:`j_closed_form` evaluates; :func:`j_recursive` follows the
integrate-and-center definition directly and serves as its cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from aceplm.cumulants import CumulantSet, MomentSequence
from aceplm.partitions import CapacityError, partition_weighted_sum

MAX_J_ORDER = 8

_FACT = [math.factorial(i) for i in range(21)]


@dataclass(frozen=True)
class JrPolynomial:
    """Degree-``order`` polynomial; ``coeffs[i]`` multiplies ``w**i``."""

    order: int
    coeffs: tuple[float, ...]
    cumulants_used: Optional[CumulantSet] = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) != self.order + 1:
            raise ValueError(
                f"order {self.order} needs {self.order + 1} coefficients, got {len(self.coeffs)}"
            )

    def __call__(self, w):
        if np.ndim(w) == 0:
            return j_eval(self, w)
        return j_eval_batch(self, w)

    def scaled(self, c: float) -> "JrPolynomial":
        return JrPolynomial(self.order, tuple(c * a for a in self.coeffs), self.cumulants_used)


Poly = Union[JrPolynomial, Sequence[float], np.ndarray]


def _coeffs(p: Poly) -> np.ndarray:
    if isinstance(p, JrPolynomial):
        return np.asarray(p.coeffs)
    return np.asarray(p, dtype=float).reshape(-1)


def _check_r(r: int) -> None:
    if not isinstance(r, (int, np.integer)) or isinstance(r, bool):
        raise TypeError(f"order must be an int, got {type(r).__name__}")
    if r < 1 or r > MAX_J_ORDER:
        raise CapacityError(f"order r={r} outside the supported range 1..{MAX_J_ORDER}")


def _seq(values) -> tuple[float, ...]:
    if isinstance(values, (CumulantSet, MomentSequence)):
        return values.values
    return tuple(float(v) for v in values)


def j_closed_form(cumulants, r: int) -> JrPolynomial:
    """Coefficients of ``J_r`` from cumulants ``kappa_1 .. kappa_r``.

    ``a_i = S_{r+1-i} / ((i-1)! (r+1-i)!)`` where ``S_m`` is the sum over set
    partitions of ``[m]`` of ``(-1)**(#blocks) * prod kappa_{|B|}``.  The
    leading coefficient is ``1/r!``.
    """
    _check_r(r)
    kappa = _seq(cumulants)
    if len(kappa) < r:
        raise ValueError(f"order {r} needs cumulants up to order {r}, got {len(kappa)}")
    coeffs = []
    for i in range(1, r + 2):
        m = r + 1 - i
        coeffs.append(
            partition_weighted_sum(m, kappa, signed=True) / (_FACT[i - 1] * _FACT[m])
        )
    used = cumulants if isinstance(cumulants, CumulantSet) else CumulantSet(kappa)
    return JrPolynomial(r, tuple(coeffs), used)


def j_recursive(moments, r: int) -> JrPolynomial:
    """``J_r`` by integrate-and-center, starting from ``J_1(w) = w - mu_1``.

    ``I_k(w) = int_0^w J_{k-1}`` and ``J_k = I_k - E[I_k(eta)]``, with the
    expectation taken through the raw moments ``mu_1 .. mu_r``.
    """
    _check_r(r)
    mu = (1.0,) + _seq(moments)
    if len(mu) < r + 1:
        raise ValueError(f"order {r} needs moments up to order {r}, got {len(mu) - 1}")
    coeffs = [-mu[1], 1.0]
    for _ in range(2, r + 1):
        integ = [0.0] + [c / (i + 1) for i, c in enumerate(coeffs)]
        mean = math.fsum(c * mu[i] for i, c in enumerate(integ))
        integ[0] = -mean
        coeffs = integ
    return JrPolynomial(r, tuple(coeffs))


def j_derivative(p: Poly, k: int) -> np.ndarray:
    """Coefficients of the ``k``-th derivative, ascending by power."""
    c = _coeffs(p)
    degree = c.size - 1
    if k < 0 or k > degree + 1:
        raise ValueError(f"derivative order {k} outside 0..{degree + 1}")
    if k == degree + 1:
        return np.zeros(1)
    out = c.copy()
    for _ in range(k):
        out = out[1:] * np.arange(1, out.size)
    return out


def j_eval(p: Poly, w: float) -> float:
    """Horner evaluation at a scalar."""
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"cannot evaluate at non-finite w={w}")
    acc = 0.0
    for a in reversed(_coeffs(p).tolist()):
        acc = acc * w + a
    return acc


def j_eval_batch(p: Poly, w) -> np.ndarray:
    """Elementwise Horner evaluation."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("cannot evaluate at non-finite points")
    c = _coeffs(p)
    acc = np.full(w.shape, c[-1])
    for a in c[-2::-1]:
        acc = acc * w + a
    return acc


def insensitivity_rhs(kappa_true, kappa_hat, m: int) -> float:
    """``(1/m!) * sum over partitions of [m] of prod (kappa_|B| - kappa_hat_|B|)``.

    This is the expectation of the ``(r-m)``-th derivative of ``J_r`` built
    from ``kappa_hat`` when the residual law has cumulants ``kappa_true``.
    ``m = 0`` gives 1.
    """
    kt, kh = _seq(kappa_true), _seq(kappa_hat)
    if len(kt) < m or len(kh) < m:
        raise ValueError(f"need cumulants up to order {m}")
    diff = [a - b for a, b in zip(kt[:m], kh[:m])]
    return partition_weighted_sum(m, diff, signed=False) / _FACT[m]


def expected_j_derivative(p: Poly, true_moments, k: int) -> float:
    """``E[J^{(k)}(eta)]`` for a law with raw moments ``true_moments``.

    Uses ``sum_{i=k}^{r} i!/(i-k)! * a_{i+1} * mu_{i-k}``.
    """
    c = _coeffs(p)
    r = c.size - 1
    mu = (1.0,) + _seq(true_moments)
    if k < 0 or k > r + 1:
        raise ValueError(f"derivative order {k} outside 0..{r + 1}")
    if len(mu) < r - k + 1:
        raise ValueError(f"need moments up to order {r - k}")
    return math.fsum(
        _FACT[i] // _FACT[i - k] * c[i] * mu[i - k] for i in range(k, r + 1)
    )


def identification_value(p: Poly, true_moments) -> float:
    """``E[eta * J(eta)] = sum_i a_i mu_i``; needs moments up to ``order + 1``.

    For the exact ``J_r`` this equals ``kappa_{r+1} / r!``.
    """
    c = _coeffs(p)
    mu = _seq(true_moments)
    if len(mu) < c.size:
        raise ValueError(f"need moments up to order {c.size}")
    return math.fsum(a * mu[i] for i, a in enumerate(c))
