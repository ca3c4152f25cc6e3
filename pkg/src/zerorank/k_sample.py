"""Kruskal-Wallis tests for K groups, standard and zero-truncated.

All statistics are sums of squared orthogonalized contrasts of per-group
centered rank-sums, each divided by its null variance, and are referred to
the upper tail of chi-square with K - 1 degrees of freedom.

Standard test (any sizes): with S_g the centered full-pool rank-sums, the
contrasts are Y_i = sum_{j<=i} (N_{i+1} S_j - N_j S_{i+1}); their exact null
variances are N_{i+1} M_i M_{i+1} N (N+1)/12 (times the tie-correction
factor), with M_i = N_1 + ... + N_i.  For equal sizes this collapses to the
textbook statistic.

Truncated test: group g keeps floor(p N_g) values with p = max_g n_g/N_g
(for equal sizes that is exactly max_g n_g per group), the retained pool is
ranked ascending, and the centered rank-sums are

    s_g = r_g - (floor(p sum N) + 1)/2 * floor(p N_g).

Null contrast variances come in two modes:

* ``total_variance`` (default): the law-of-total-variance Monte-Carlo
  estimate of :mod:`zerorank.mc_variance`, which captures the variability
  of the data-driven truncation and keeps the test calibrated at moderate
  sizes;
* ``plug_in`` (equal sizes only): the large-sample approximation
  i (i+1) K^2 N^3 pbar^3 (4/3 - pbar)/4 with pbar the mean non-zero
  proportion.  It omits the variance of the conditional mean of U_i, an
  O(N^(-1/2)) relative effect that noticeably inflates the Type-I error
  below a few thousand observations per group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import chdtrc

from . import rank_core
from .errors import DegenerateAllZeros, DegenerateConstant, DegenerateVariance
from .mc_variance import (
    MEAN_OF_P,
    POOLED,
    McVarianceConfig,
    conditional_mean_u,
    conditional_var_u,
    estimate_var_u,
    mean_theta_fraction,
    pooled_theta_fraction,
    var_u_components,
)
from .rank_core import GroupSample
from .two_sample import TestOutcome

TOTAL_VARIANCE = "total_variance"
PLUG_IN = "plug_in"

__all__ = [
    "McVarianceConfig",
    "KSampleStats",
    "kruskal_wallis_standard",
    "kw_truncated_equal",
    "kw_truncated_unequal",
    "kruskal_wallis_truncated",
    "truncated_contrasts",
    "estimate_var_u",
    "var_u_components",
    "conditional_var_u",
    "conditional_mean_u",
    "weighted_contrasts",
    "simple_contrasts",
    "full_contrast_variances",
    "equal_trunc_variances",
    "compute_k_sample_stats",
    "pooled_theta_hat",
]


@dataclass(frozen=True)
class KSampleStats:
    """Centered rank-sums, contrasts and null variances for the K-sample tests."""

    full_centered: np.ndarray
    full_contrasts: np.ndarray
    full_contrast_variances: np.ndarray
    trunc_centered: np.ndarray
    trunc_contrasts: np.ndarray
    trunc_contrast_variances: np.ndarray


def weighted_contrasts(sizes, centered) -> np.ndarray:
    """Size-weighted contrasts sum_{j<=i}(N_{i+1} c_j - N_j c_{i+1}).

    ``centered`` may carry leading batch dimensions; the group axis is last.
    """
    sizes = np.asarray(sizes, dtype=float)
    centered = np.asarray(centered, dtype=float)
    cums = np.cumsum(centered, axis=-1)
    head_sizes = np.cumsum(sizes)[:-1]
    return sizes[1:] * cums[..., :-1] - head_sizes * centered[..., 1:]


def simple_contrasts(centered) -> np.ndarray:
    """Equal-size contrasts sum_{j<=i} c_j - i * c_{i+1} (group axis last)."""
    centered = np.asarray(centered, dtype=float)
    k = centered.shape[-1]
    idx = np.arange(1, k, dtype=float)
    cums = np.cumsum(centered, axis=-1)
    return cums[..., :-1] - idx * centered[..., 1:]


def _chi2_upper(statistic: float, df: int) -> float:
    return float(chdtrc(df, statistic))


def _check_groups(groups: Sequence[GroupSample]) -> None:
    if len(groups) < 2:
        raise ValueError("at least two groups are required")


def full_pool_centered(groups: Sequence[GroupSample]) -> tuple[np.ndarray, float]:
    """Centered full-pool rank-sums S_g and the pooled tie term."""
    pooled = np.concatenate([g.values for g in groups])
    ranks = rank_core.midranks(pooled, rank_core.ASCENDING)
    sizes = np.array([g.N for g in groups])
    bounds = np.cumsum([0, *sizes])
    rank_sums = np.array([ranks[bounds[i]:bounds[i + 1]].sum() for i in range(len(groups))])
    centered = rank_sums - (pooled.size + 1) * sizes / 2.0
    return centered, rank_core.tie_term(pooled)


def full_contrast_variances(sizes, tie_factor: float = 1.0) -> np.ndarray:
    """Exact null variances of the full-pool contrasts Y_i."""
    sizes = np.asarray(sizes, dtype=float)
    n_tot = sizes.sum()
    head = np.cumsum(sizes)
    return sizes[1:] * head[:-1] * head[1:] * n_tot * (n_tot + 1) / 12.0 * tie_factor


def kruskal_wallis_standard(
    groups: Sequence[GroupSample], tie_correction: bool = True
) -> TestOutcome:
    """Kruskal-Wallis test for K >= 2 groups with possibly unequal sizes.

    With tie correction (default) the contrast variances are the exact
    conditional variances given the observed tie pattern, matching the
    textbook tie-corrected H statistic.
    """
    _check_groups(groups)
    sizes = np.array([g.N for g in groups])
    centered, tie_sum = full_pool_centered(groups)
    n_tot = int(sizes.sum())
    tie_factor = 1.0 - tie_sum / (n_tot**3 - n_tot) if tie_correction else 1.0
    if tie_factor <= 0:
        raise DegenerateConstant("pooled observations are all identical")
    contrasts = weighted_contrasts(sizes, centered)
    variances = full_contrast_variances(sizes, tie_factor)
    statistic = float((contrasts**2 / variances).sum())
    df = len(groups) - 1
    return TestOutcome(
        statistic=statistic,
        df=df,
        p_value=_chi2_upper(statistic, df),
        method="kw",
        n_retained=tuple(int(s) for s in sizes),
        notes={
            "centered": centered,
            "contrasts": contrasts,
            "contrast_variances": variances,
            "tie_correction": tie_correction,
        },
    )


def truncated_contrasts(groups: Sequence[GroupSample]) -> tuple[np.ndarray, np.ndarray]:
    """Centered truncated rank-sums s_g and size-weighted contrasts U_i."""
    _check_groups(groups)
    if all(g.n == 0 for g in groups):
        raise DegenerateAllZeros("all observations in all groups are zero")
    counts = rank_core.keep_counts(groups)
    if min(counts) == 0:
        raise DegenerateAllZeros("a group retains no observations after truncation")
    pool = rank_core.truncate(groups, rank_core.ASCENDING)
    pooled_keep = rank_core.floor_pooled_count(groups)
    centered = pool.group_rank_sums - (pooled_keep + 1) / 2.0 * np.asarray(counts)
    sizes = [g.N for g in groups]
    return centered, weighted_contrasts(sizes, centered)


def pooled_theta_hat(groups: Sequence[GroupSample], mode: str = POOLED) -> float:
    """Estimate of the common non-zero probability under the null."""
    counts = [g.n for g in groups]
    sizes = [g.N for g in groups]
    if mode == POOLED:
        return pooled_theta_fraction(counts, sizes)
    if mode == MEAN_OF_P:
        return mean_theta_fraction(counts, sizes)
    raise ValueError(f"unknown theta_hat_mode {mode!r}")


def kw_truncated_unequal(
    groups: Sequence[GroupSample], mc: McVarianceConfig | None = None
) -> TestOutcome:
    """Truncated Kruskal-Wallis test for groups of arbitrary sizes.

    Contrast variances come from :func:`zerorank.mc_variance.estimate_var_u`
    at the data-driven theta_hat; everything else is closed form.
    """
    _check_groups(groups)
    mc = mc or McVarianceConfig()
    centered, contrasts = truncated_contrasts(groups)
    sizes = tuple(g.N for g in groups)
    theta_hat = pooled_theta_hat(groups, mc.theta_hat_mode)
    variances = np.array(
        [estimate_var_u(sizes, theta_hat, i, mc) for i in range(1, len(groups))]
    )
    if (variances <= 0).any() or not np.isfinite(variances).all():
        raise DegenerateVariance(
            f"Monte-Carlo contrast variances {variances} at theta_hat={theta_hat}"
        )
    statistic = float((contrasts**2 / variances).sum())
    df = len(groups) - 1
    counts = rank_core.keep_counts(groups)
    return TestOutcome(
        statistic=statistic,
        df=df,
        p_value=_chi2_upper(statistic, df),
        method="tkw",
        n_retained=tuple(counts),
        notes={
            "variant": "unequal",
            "centered": centered,
            "contrasts": contrasts,
            "contrast_variances": variances,
            "theta_hat": theta_hat,
        },
    )


def equal_trunc_variances(k_groups: int, size: int, pbar: float) -> np.ndarray:
    """Plug-in null variances i(i+1) K^2 N^3 pbar^3 (4/3 - pbar)/4."""
    idx = np.arange(1, k_groups, dtype=float)
    return idx * (idx + 1) * k_groups**2 * size**3 * pbar**3 * (4.0 / 3.0 - pbar) / 4.0


def kw_truncated_equal(
    groups: Sequence[GroupSample],
    variance_mode: str = TOTAL_VARIANCE,
    mc: McVarianceConfig | None = None,
) -> TestOutcome:
    """Truncated Kruskal-Wallis test for equal group sizes.

    Requires all N_g equal; use :func:`kruskal_wallis_truncated` to dispatch
    on size equality.  With K = 2 this reproduces the truncated Wilcoxon
    statistic exactly (same variance mode on both sides).
    """
    _check_groups(groups)
    sizes = [g.N for g in groups]
    if len(set(sizes)) != 1:
        raise ValueError(
            "group sizes differ; use kw_truncated_unequal or kruskal_wallis_truncated"
        )
    if variance_mode == TOTAL_VARIANCE:
        outcome = kw_truncated_unequal(groups, mc)
        outcome.notes["variant"] = "equal"
        return outcome
    if variance_mode != PLUG_IN:
        raise ValueError(f"unknown variance_mode {variance_mode!r}")

    size = sizes[0]
    k_groups = len(groups)
    n = max(g.n for g in groups)
    if n == 0:
        raise DegenerateAllZeros("all observations in all groups are zero")
    pool = rank_core.truncate(groups, rank_core.ASCENDING)
    centered = pool.group_rank_sums - n * (k_groups * n + 1) / 2.0
    contrasts = simple_contrasts(centered)
    pbar = mean_theta_fraction([g.n for g in groups], sizes)
    variances = equal_trunc_variances(k_groups, size, pbar)
    if (variances <= 0).any():
        raise DegenerateVariance("plug-in contrast variance is not positive")
    statistic = float((contrasts**2 / variances).sum())
    df = k_groups - 1
    return TestOutcome(
        statistic=statistic,
        df=df,
        p_value=_chi2_upper(statistic, df),
        method="tkw",
        n_retained=pool.keep_counts,
        notes={
            "variant": "equal",
            "variance_mode": PLUG_IN,
            "centered": centered,
            "contrasts": contrasts,
            "contrast_variances": variances,
        },
    )


def kruskal_wallis_truncated(
    groups: Sequence[GroupSample], mc: McVarianceConfig | None = None
) -> TestOutcome:
    """Truncated Kruskal-Wallis test, dispatching on group-size equality."""
    _check_groups(groups)
    if len({g.N for g in groups}) == 1:
        return kw_truncated_equal(groups, mc=mc)
    return kw_truncated_unequal(groups, mc)


def compute_k_sample_stats(
    groups: Sequence[GroupSample],
    mc: McVarianceConfig | None = None,
    tie_correction: bool = True,
) -> KSampleStats:
    """Full and truncated centered rank-sums, contrasts and variances."""
    _check_groups(groups)
    sizes = [g.N for g in groups]
    full_centered, tie_sum = full_pool_centered(groups)
    n_tot = sum(sizes)
    tie_factor = 1.0 - tie_sum / (n_tot**3 - n_tot) if tie_correction else 1.0
    trunc = kruskal_wallis_truncated(groups, mc)
    return KSampleStats(
        full_centered=full_centered,
        full_contrasts=weighted_contrasts(sizes, full_centered),
        full_contrast_variances=full_contrast_variances(sizes, tie_factor),
        trunc_centered=trunc.notes["centered"],
        trunc_contrasts=trunc.notes["contrasts"],
        trunc_contrast_variances=np.asarray(trunc.notes["contrast_variances"], dtype=float),
    )
