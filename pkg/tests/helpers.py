"""Shared test utilities: samplers and brute-force oracles."""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import numpy as np

from zerorank.rank_core import GroupSample


def draw_group(rng: np.random.Generator, theta: float, alpha: float, beta: float,
               n: int) -> GroupSample:
    """One two-part sample: zero w.p. 1 - theta, else Beta(alpha, beta)."""
    values = np.where(rng.random(n) < theta, rng.beta(alpha, beta, size=n), 0.0)
    return GroupSample(values)


def enumerated_ranksum_moments(total: int, subset: int) -> tuple[Fraction, Fraction]:
    """Exact mean/variance of the rank-sum over all size-``subset`` subsets."""
    sums = [sum(c) for c in combinations(range(1, total + 1), subset)]
    count = len(sums)
    mean = Fraction(sum(sums), count)
    var = Fraction(sum(s * s for s in sums), count) - mean * mean
    return mean, var


def textbook_kruskal_h(groups: list[np.ndarray]) -> float:
    """Tie-free Kruskal-Wallis H = 12/(N(N+1)) sum R_g^2/N_g - 3(N+1)."""
    from scipy.stats import rankdata

    pooled = np.concatenate(groups)
    ranks = rankdata(pooled)
    n_tot = pooled.size
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + g.size].sum()
        h += r * r / g.size
        start += g.size
    return 12.0 / (n_tot * (n_tot + 1)) * h - 3 * (n_tot + 1)
