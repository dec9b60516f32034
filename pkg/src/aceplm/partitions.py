"""Set partitions of ``[m]`` grouped by their multiset of block sizes.

Every cumulant formula in this package only looks at block sizes, so instead
of walking the ``Bell(m)`` individual partitions we walk integer partitions of
``m`` and weight each by the exact number of set partitions sharing it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Mapping, Sequence, Union

MAX_ORDER = 20


class CapacityError(ValueError):
    """Requested order is outside the supported range."""


@dataclass(frozen=True)
class BlockSizeProfile:
    """Block sizes of a set partition of ``[m]`` and how many partitions share them.

    ``sizes`` is sorted in non-increasing order.
    """

    sizes: tuple[int, ...]
    multiplicity: int

    @property
    def m(self) -> int:
        return sum(self.sizes)

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    def counts(self) -> dict[int, int]:
        """Map block size ``j`` to the number of blocks ``c_j`` of that size."""
        return dict(Counter(self.sizes))


def _check_order(m: int) -> None:
    if not isinstance(m, int) or isinstance(m, bool):
        raise TypeError(f"order must be an int, got {type(m).__name__}")
    if m < 0:
        raise ValueError(f"order must be non-negative, got {m}")
    if m > MAX_ORDER:
        raise CapacityError(f"order {m} exceeds the supported maximum {MAX_ORDER}")


def _integer_partitions(m: int, largest: int) -> list[tuple[int, ...]]:
    # descending lexicographic: larger first parts come first
    if m == 0:
        return [()]
    out = []
    for first in range(min(m, largest), 0, -1):
        for rest in _integer_partitions(m - first, first):
            out.append((first,) + rest)
    return out


def _multiplicity(sizes: Sequence[int]) -> int:
    denom = 1
    for size, count in Counter(sizes).items():
        denom *= factorial(size) ** count * factorial(count)
    return factorial(sum(sizes)) // denom


@lru_cache(maxsize=None)
def _profiles(m: int) -> tuple[BlockSizeProfile, ...]:
    return tuple(
        BlockSizeProfile(sizes, _multiplicity(sizes))
        for sizes in _integer_partitions(m, m)
    )


def block_size_profiles(m: int) -> list[BlockSizeProfile]:
    """All block-size profiles of set partitions of ``[m]``.

    Parameters
    ----------
    m : int
        Size of the ground set, ``0 <= m <= 20``.

    Returns
    -------
    list of BlockSizeProfile
        Ordered descending-lexicographically on the sorted sizes, so ``(m,)``
        comes first and ``(1, ..., 1)`` last.  ``m = 0`` yields the single
        empty profile with multiplicity one.

    Examples
    --------
    >>> [(p.sizes, p.multiplicity) for p in block_size_profiles(3)]
    [((3,), 1), ((2, 1), 3), ((1, 1, 1), 1)]
    """
    _check_order(m)
    return list(_profiles(m))


def bell_number(m: int) -> int:
    """Number of set partitions of ``[m]``, exact."""
    _check_order(m)
    return sum(p.multiplicity for p in _profiles(m))


Weight = Union[Mapping[int, float], Sequence[float], Callable[[int], float]]


def _weight_lookup(weight: Weight, m: int) -> dict[int, float]:
    if callable(weight):
        return {j: weight(j) for j in range(1, m + 1)}
    if isinstance(weight, Mapping):
        missing = [j for j in range(1, m + 1) if j not in weight]
        if missing:
            raise ValueError(f"weight is missing order(s) {missing}")
        return {j: weight[j] for j in range(1, m + 1)}
    # sequences are 1-indexed by position: weight[0] is order 1
    if len(weight) < m:
        raise ValueError(
            f"weight covers orders 1..{len(weight)} but order {m} is needed"
        )
    return {j: weight[j - 1] for j in range(1, m + 1)}


def partition_weighted_sum(m: int, weight: Weight, signed: bool = False) -> float:
    """Sum of ``prod_{B in pi} weight(|B|)`` over all set partitions ``pi`` of ``[m]``.

    With ``signed=True`` each term carries ``(-1)**|pi|``, the number of blocks.
    ``weight`` may be a mapping ``order -> value``, a callable, or a sequence
    whose first entry is order 1.  The empty partition of ``[0]`` contributes 1.
    """
    _check_order(m)
    w = _weight_lookup(weight, m)
    total = 0.0
    for prof in _profiles(m):
        term = float(prof.multiplicity)
        for size in prof.sizes:
            term *= w[size]
        if signed and prof.n_blocks % 2:
            term = -term
        total += term
    return total
