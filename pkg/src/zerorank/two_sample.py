"""Wilcoxon rank-sum tests for two groups, standard and zero-truncated.

Both tests are reported in squared form: statistic = (centered rank-sum)^2
divided by its null variance, referred to the upper tail of chi-square with
one degree of freedom.  Group sizes may differ.

The standard test uses the exact conditional (tie-corrected) variance by
default; a plug-in large-sample variance that depends only on the observed
non-zero proportions is also available.

The truncated test removes an equal-and-maximal share of zeros per group
(see :mod:`zerorank.rank_core`), ranks the retained pool descending (zeros,
being smallest, get the highest ranks) and centers the group-1 rank-sum as

    centered = r - (floor(p (N1 + N2)) + 1)/2 * floor(p N1)
                 - (1/4) pbar (1 - pbar) (N2 - N1),       pbar = (p1 + p2)/2.

The last term corrects for unequal sample sizes and vanishes when N1 = N2.
Its null variance comes in two modes: ``total_variance`` (default), the
law-of-total-variance Monte-Carlo estimate that keeps the test calibrated
at moderate sizes, and ``plug_in``, the large-sample approximation
N1 N2 (N1 + N2) pbar^3 (4/3 - pbar)/4, which ignores the variability of the
data-driven truncation and is anticonservative below a few thousand
observations per group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import chdtrc

from . import rank_core
from .errors import DegenerateAllZeros, DegenerateConstant, DegenerateVariance
from .mc_variance import McVarianceConfig, estimate_var_two_sample, mean_theta_fraction
from .rank_core import GroupSample

TIE_CORRECTED = "tie_corrected"
PLUG_IN = "plug_in"
TOTAL_VARIANCE = "total_variance"


@dataclass(frozen=True)
class TestOutcome:
    """Result of one rank test: statistic, degrees of freedom, p-value."""

    statistic: float
    df: int
    p_value: float
    method: str
    n_retained: tuple[int, ...]
    notes: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TwoSampleStats:
    """Raw centered rank-sums and null variances for the two-sample tests.

    ``full_*`` refer to the untruncated pooled ranking, ``trunc_*`` to the
    zero-truncated pool; ``trunc_centered`` includes the unequal-size
    correction term and ``trunc_variance`` is the plug-in approximation
    (the deterministic reference value; the truncated test itself defaults
    to the Monte-Carlo total-variance estimate).
    """

    full_rank_sum: float
    full_centered: float
    full_variance: float
    trunc_rank_sum: float
    trunc_centered: float
    trunc_variance: float


def _chi2_upper(statistic: float, df: int) -> float:
    return float(chdtrc(df, statistic))


def _full_pool_stats(x: GroupSample, y: GroupSample, variance_mode: str):
    pooled = np.concatenate([x.values, y.values])
    ranks = rank_core.midranks(pooled, rank_core.ASCENDING)
    n_tot = x.N + y.N
    rank_sum = float(ranks[: x.N].sum())
    centered = rank_sum - (n_tot + 1) * x.N / 2.0

    if variance_mode == TIE_CORRECTED:
        tie_sum = rank_core.tie_term(pooled)
        variance = x.N * y.N / 12.0 * ((n_tot + 1) - tie_sum / (n_tot * (n_tot - 1)))
    elif variance_mode == PLUG_IN:
        pbar = (x.p + y.p) / 2.0
        variance = x.N * y.N * n_tot * pbar * (1 - pbar + pbar**2 / 3) / 4.0
    else:
        raise ValueError(f"unknown variance_mode {variance_mode!r}")
    return rank_sum, centered, variance


def plug_in_trunc_variance(x: GroupSample, y: GroupSample) -> float:
    """Large-sample variance N1 N2 (N1 + N2) pbar^3 (4/3 - pbar)/4."""
    pbar = (x.p + y.p) / 2.0
    return x.N * y.N * (x.N + y.N) * pbar**3 * (4.0 / 3.0 - pbar) / 4.0


def _truncated_stats(x: GroupSample, y: GroupSample):
    if x.n == 0 and y.n == 0:
        raise DegenerateAllZeros("all observations in both groups are zero")
    k1, k2 = rank_core.keep_counts([x, y])
    if k1 == 0 or k2 == 0:
        raise DegenerateAllZeros(
            "a group retains no observations after truncation"
        )
    pool = rank_core.truncate([x, y], rank_core.DESCENDING)
    rank_sum = float(pool.group_rank_sums[0])
    pooled_keep = rank_core.floor_pooled_count([x, y])
    pbar = (x.p + y.p) / 2.0
    correction = 0.25 * pbar * (1 - pbar) * (y.N - x.N)
    centered = rank_sum - (pooled_keep + 1) / 2.0 * k1 - correction
    return (k1, k2), rank_sum, centered


def two_sample_stats(
    x: GroupSample, y: GroupSample, variance_mode: str = TIE_CORRECTED
) -> TwoSampleStats:
    """Centered rank-sums and null variances for both tests at once.

    ``variance_mode`` selects the full-pool variance (tie_corrected or
    plug_in); the truncated variance reported here is always the plug-in
    reference value.
    """
    full_rank_sum, full_centered, full_variance = _full_pool_stats(x, y, variance_mode)
    _, trunc_rank_sum, trunc_centered = _truncated_stats(x, y)
    return TwoSampleStats(
        full_rank_sum=full_rank_sum,
        full_centered=full_centered,
        full_variance=full_variance,
        trunc_rank_sum=trunc_rank_sum,
        trunc_centered=trunc_centered,
        trunc_variance=plug_in_trunc_variance(x, y),
    )


def wilcoxon_standard(
    x: GroupSample, y: GroupSample, variance_mode: str = TIE_CORRECTED
) -> TestOutcome:
    """Two-sided Wilcoxon rank-sum test in squared (chi-square) form.

    ``tie_corrected`` uses the exact conditional variance given the observed
    tie pattern; ``plug_in`` uses the large-sample variance driven by the
    observed non-zero proportions.

    Raises DegenerateConstant when all pooled values are identical.
    """
    _, centered, variance = _full_pool_stats(x, y, variance_mode)
    if variance <= 0:
        raise DegenerateConstant("pooled observations are all identical")
    statistic = centered**2 / variance
    return TestOutcome(
        statistic=statistic,
        df=1,
        p_value=_chi2_upper(statistic, 1),
        method="w",
        n_retained=(x.N, y.N),
        notes={"centered": centered, "variance": variance, "variance_mode": variance_mode},
    )


def wilcoxon_truncated(
    x: GroupSample,
    y: GroupSample,
    variance_mode: str = TOTAL_VARIANCE,
    mc: McVarianceConfig | None = None,
) -> TestOutcome:
    """Truncated Wilcoxon rank-sum test for zero-inflated data.

    The null variance uses the Monte-Carlo total-variance estimate at
    theta_hat = (p1 + p2)/2 by default; ``variance_mode='plug_in'`` selects
    the large-sample closed form instead.  ``mc`` controls the Monte-Carlo
    draw count and seed (theta_hat_mode is ignored: this test always uses
    the mean of the two observed proportions).

    Raises DegenerateAllZeros when there is nothing to rank (all zeros, or a
    group retains nothing) and DegenerateVariance when the variance estimate
    is not positive.
    """
    kept, _, centered = _truncated_stats(x, y)
    if variance_mode == TOTAL_VARIANCE:
        mc = mc or McVarianceConfig()
        theta_hat = mean_theta_fraction((x.n, y.n), (x.N, y.N))
        variance = estimate_var_two_sample((x.N, y.N), theta_hat, mc)
    elif variance_mode == PLUG_IN:
        variance = plug_in_trunc_variance(x, y)
    else:
        raise ValueError(f"unknown variance_mode {variance_mode!r}")
    if variance <= 0:
        raise DegenerateVariance("null variance of the truncated rank-sum is zero")
    statistic = centered**2 / variance
    return TestOutcome(
        statistic=statistic,
        df=1,
        p_value=_chi2_upper(statistic, 1),
        method="tw",
        n_retained=kept,
        notes={"centered": centered, "variance": variance, "variance_mode": variance_mode},
    )
