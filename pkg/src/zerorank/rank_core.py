"""Midranks, zero-truncation and exact rank-sum moments.

This module holds the machinery shared by every test in the package:

* midranks with ties averaged, in either ranking direction;
* truncation of a multi-group sample: with ``p_i = n_i / N_i`` the observed
  non-zero proportion of group i and ``p = max_i p_i``, group i keeps its
  ``floor(p * N_i)`` largest values.  Everything removed is a zero, the group
  attaining the maximum keeps all of its values, and for equal group sizes
  each group keeps exactly ``max_i n_i`` values.
* exact mean/variance of the rank-sum of a random subset drawn without
  replacement from the ranks 1..total.

Floors are evaluated in integer arithmetic (``n_j * N_i // N_j``) so that a
proportion that is exactly representable never floors to the wrong integer.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateAllZeros

Direction = str  # "ascending" | "descending"

ASCENDING = "ascending"
DESCENDING = "descending"


def _as_clean_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    if not np.isfinite(arr).all():
        raise ValueError("values must be finite")
    if (arr < 0).any():
        raise ValueError("values must be non-negative")
    return arr


@dataclass(frozen=True)
class GroupSample:
    """One group's non-negative observations plus zero/non-zero bookkeeping."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_clean_values(self.values)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def N(self) -> int:
        """Group size."""
        return int(self.values.size)

    @property
    def n(self) -> int:
        """Number of strictly positive observations."""
        return int(np.count_nonzero(self.values > 0))

    @property
    def p(self) -> float:
        """Observed non-zero proportion n/N."""
        return self.n / self.N


@dataclass(frozen=True)
class TruncatedPool:
    """Combined post-truncation data with midranks and per-group rank-sums."""

    retained: tuple[np.ndarray, ...]
    keep_counts: tuple[int, ...]
    midranks: np.ndarray
    group_rank_sums: np.ndarray
    direction: Direction

    @property
    def total(self) -> int:
        """Number of retained observations across all groups."""
        return int(sum(self.keep_counts))


@dataclass(frozen=True)
class RankSumMoments:
    """Exact moments of the rank-sum of a random subset of 1..total.

    Stored as Fractions so small-sample comparisons against enumeration can
    be made exactly; ``float()`` them for numeric work.
    """

    mean: Fraction
    variance: Fraction


def midranks(values, direction: Direction = ASCENDING) -> np.ndarray:
    """Ranks with ties averaged.

    Ascending gives rank 1 to the smallest value, descending to the largest.
    Midranks are multiples of 1/2, so the descending ranks are exactly
    ``len(values) + 1`` minus the ascending ones.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    if not np.isfinite(arr).all():
        raise ValueError("values must be finite")
    ranks = rankdata(arr, method="average")
    if direction == ASCENDING:
        return ranks
    if direction == DESCENDING:
        return arr.size + 1.0 - ranks
    raise ValueError(f"unknown direction {direction!r}")


def keep_counts(groups: Sequence[GroupSample]) -> list[int]:
    """Per-group retained counts floor(p * N_i) with p = max_i n_i/N_i.

    Computed as ``max_j floor(n_j * N_i / N_j)`` in integer arithmetic;
    floor commutes with max, so this equals flooring the exact product.
    """
    ns = [g.n for g in groups]
    sizes = [g.N for g in groups]
    return [max(n_j * N_i // N_j for n_j, N_j in zip(ns, sizes)) for N_i in sizes]


def floor_pooled_count(groups: Sequence[GroupSample]) -> int:
    """floor(p * sum_i N_i) with p = max_i n_i/N_i, in integer arithmetic."""
    total = sum(g.N for g in groups)
    return max(g.n * total // g.N for g in groups)


def truncate(groups: Sequence[GroupSample], direction: Direction = ASCENDING) -> TruncatedPool:
    """Drop an equal-and-maximal share of zeros from every group.

    Group i keeps its floor(p * N_i) largest values where p = max_i n_i/N_i.
    The group attaining p loses nothing and every removed value is zero
    (floor(p * N_i) >= n_i).  Midranks are computed over the retained pool in
    the requested direction.
    """
    if len(groups) == 0:
        raise ValueError("at least one group is required")
    if all(g.n == 0 for g in groups):
        raise DegenerateAllZeros("all observations in all groups are zero")
    counts = keep_counts(groups)
    retained = tuple(
        np.sort(g.values)[g.N - k:] for g, k in zip(groups, counts)
    )
    pooled = np.concatenate(retained)
    ranks = midranks(pooled, direction)
    bounds = np.cumsum([0, *counts])
    rank_sums = np.array(
        [ranks[bounds[i]:bounds[i + 1]].sum() for i in range(len(groups))]
    )
    return TruncatedPool(
        retained=retained,
        keep_counts=tuple(counts),
        midranks=ranks,
        group_rank_sums=rank_sums,
        direction=direction,
    )


def ranksum_moments_exact(total: int, subset: int) -> RankSumMoments:
    """Exact moments of the rank-sum of a size-``subset`` random subset.

    For a subset of size m drawn without replacement from ranks 1..n:
    mean = m (n + 1) / 2 and variance = m (n - m) (n + 1) / 12.
    """
    if total < 1 or subset < 1:
        raise ValueError("total and subset must be positive")
    if subset > total:
        raise ValueError(f"subset {subset} exceeds total {total}")
    mean = Fraction(subset * (total + 1), 2)
    variance = Fraction(subset * (total - subset) * (total + 1), 12)
    return RankSumMoments(mean=mean, variance=variance)


def tie_term(values) -> float:
    """Sum of t^3 - t over tie groups of size t in ``values``."""
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return float((counts.astype(float) ** 3 - counts).sum())
