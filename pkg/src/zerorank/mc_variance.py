"""Null-variance estimates for truncated rank statistics.

After zero-truncation, the null variance of a centered rank-sum (or of a
contrast of them) has no usable closed form: conditional on the per-group
non-zero counts everything is exact, but the counts are random and the keep
counts floor(p N_g) couple the groups through p = max_g n_g/N_g.  The
estimators here apply the law of total variance: draw the counts
n_g ~ Binomial(N_g, theta_hat) independently, evaluate the exact
conditional variance and the exact conditional mean per draw, and return

    mean(conditional variances) + variance(conditional means).

Both conditional moments follow from exchangeability of the retained pool:
given counts, the retained zeros are one tied block and the non-zero ranks
are an exchangeable assignment.

Draws for contrast i come from a Philox stream keyed (seed, i); the
two-sample estimator shares the stream of contrast 1, so at equal group
sizes the truncated Wilcoxon and the two-group truncated Kruskal-Wallis
normalize with the same draws and their statistics agree to rounding.
Estimates are memoized on (sizes, theta_hat, contrast, replicates, seed);
they are pure functions of that key.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DegenerateVariance
from .rng import generator

POOLED = "pooled"
MEAN_OF_P = "mean_of_p"


@dataclass(frozen=True)
class McVarianceConfig:
    """Monte-Carlo settings for the truncated-statistic null variances."""

    replicates: int = 10_000
    seed: int = 0
    theta_hat_mode: str = POOLED

    def __post_init__(self) -> None:
        if self.replicates < 100:
            raise ValueError("replicates must be at least 100")
        if self.theta_hat_mode not in (POOLED, MEAN_OF_P):
            raise ValueError(f"unknown theta_hat_mode {self.theta_hat_mode!r}")


def pooled_theta_fraction(counts: Sequence[int], sizes: Sequence[int]) -> float:
    """Pooled non-zero proportion sum(n)/sum(N), reduced exactly before float."""
    return float(Fraction(int(sum(counts)), int(sum(sizes))))


def mean_theta_fraction(counts: Sequence[int], sizes: Sequence[int]) -> float:
    """Unweighted mean of the per-group proportions, reduced exactly.

    Exact rational reduction makes this coincide bit-for-bit with the pooled
    estimate when all sizes are equal, which keeps memoization keys shared.
    """
    frac = sum(Fraction(int(n), int(size)) for n, size in zip(counts, sizes))
    return float(frac / len(sizes))


@lru_cache(maxsize=8)
def _null_count_draws(
    sizes: tuple[int, ...], theta_hat: float, stream: int, replicates: int, seed: int
) -> tuple[np.ndarray, int]:
    """Binomial non-zero counts per replicate; all-zero draws are redrawn."""
    rng = generator(seed, stream)
    sizes_arr = np.array(sizes, dtype=np.int64)
    draws = rng.binomial(sizes_arr, theta_hat, size=(replicates, len(sizes)))
    redrawn = 0
    degenerate = draws.sum(axis=1) == 0
    while degenerate.any():
        redrawn += int(degenerate.sum())
        if redrawn > replicates // 2:
            raise DegenerateVariance(
                f"more than half of the Monte-Carlo count draws were all-zero "
                f"at theta_hat={theta_hat}"
            )
        draws[degenerate] = rng.binomial(
            sizes_arr, theta_hat, size=(int(degenerate.sum()), len(sizes))
        )
        degenerate = draws.sum(axis=1) == 0
    draws.flags.writeable = False
    return draws, redrawn


def keep_counts_from_draws(sizes: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """floor(p N_g) per draw with p = max_g n_g/N_g, in integer arithmetic."""
    return np.max(counts[..., None, :] * sizes[:, None] // sizes[None, :], axis=-1)


def conditional_var_u(sizes, counts, contrast: int) -> np.ndarray:
    """Exact Var[U_i | counts] for the size-weighted truncated contrasts.

    (M + 1)/12 * [ M (N_{i+1}^2 h + n_{i+1} H^2) - (n_{i+1} H - N_{i+1} h)^2 ]
    with M the total non-zero count, h = n_1 + .. + n_i, H = N_1 + .. + N_i.
    """
    sizes = np.asarray(sizes, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1)
    head = counts[..., :contrast].sum(axis=-1)
    nxt = counts[..., contrast]
    head_size = sizes[:contrast].sum()
    next_size = sizes[contrast]
    inner = total * (next_size**2 * head + nxt * head_size**2)
    inner -= (nxt * head_size - next_size * head) ** 2
    return (total + 1.0) * inner / 12.0


def conditional_mean_u(sizes, counts, contrast: int) -> np.ndarray:
    """Exact E[U_i | counts] for the size-weighted truncated contrasts.

    Group g retains k_g values of which z_g = k_g - n_g are zeros; ranking
    ascending puts the Z tied zeros at the bottom, so
    E[r_g | counts] = z_g (Z+1)/2 + n_g (Z+1+T)/2 with T the retained total.
    """
    sizes_int = np.asarray(sizes, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    keep = keep_counts_from_draws(sizes_int, counts)
    pooled_keep = np.max(counts * int(sizes_int.sum()) // sizes_int, axis=-1)
    retained_total = keep.sum(axis=-1)
    zeros = retained_total - counts.sum(axis=-1)
    mean_ranks = (
        (keep - counts) * (zeros[..., None] + 1.0) / 2.0
        + counts * (zeros[..., None] + 1.0 + retained_total[..., None]) / 2.0
    )
    mean_centered = mean_ranks - (pooled_keep[..., None] + 1.0) / 2.0 * keep
    cums = np.cumsum(mean_centered, axis=-1)
    head_sizes = np.cumsum(sizes_int.astype(float))[:-1]
    contrasts = sizes_int[1:] * cums[..., :-1] - head_sizes * mean_centered[..., 1:]
    return contrasts[..., contrast - 1]


def conditional_var_two_sample(counts) -> np.ndarray:
    """Exact Var[s | counts] for the two-sample truncated statistic: n1 n2 (M+1)/12."""
    counts = np.asarray(counts, dtype=float)
    return counts[..., 0] * counts[..., 1] * (counts.sum(axis=-1) + 1.0) / 12.0


def conditional_mean_two_sample(sizes, counts) -> np.ndarray:
    """Exact E[s | counts] for the two-sample truncated statistic.

    Descending ranking puts the non-zeros on ranks 1..M (each expected
    (M+1)/2) and the retained zeros in one tied block above them.  The
    unequal-size correction term is a function of the counts and enters
    the conditional mean directly.
    """
    n1_size, n2_size = (int(s) for s in sizes)
    counts = np.asarray(counts, dtype=np.int64)
    n1 = counts[..., 0].astype(float)
    n2 = counts[..., 1].astype(float)
    total_nonzero = n1 + n2
    keep1 = np.maximum(counts[..., 0], counts[..., 1] * n1_size // n2_size)
    keep2 = np.maximum(counts[..., 0] * n2_size // n1_size, counts[..., 1])
    pooled_keep = np.maximum(
        counts[..., 0] * (n1_size + n2_size) // n1_size,
        counts[..., 1] * (n1_size + n2_size) // n2_size,
    )
    retained_total = (keep1 + keep2).astype(float)
    mean_rank_sum = n1 * (total_nonzero + 1.0) / 2.0 + (keep1 - counts[..., 0]) * (
        total_nonzero + 1.0 + retained_total
    ) / 2.0
    pbar = (n1 / n1_size + n2 / n2_size) / 2.0
    correction = 0.25 * pbar * (1.0 - pbar) * (n2_size - n1_size)
    return mean_rank_sum - (pooled_keep + 1.0) / 2.0 * keep1 - correction


@lru_cache(maxsize=65536)
def _var_u_cached(
    sizes: tuple[int, ...], theta_hat: float, contrast: int, replicates: int, seed: int
) -> tuple[float, float, float, int]:
    draws, redrawn = _null_count_draws(sizes, theta_hat, contrast, replicates, seed)
    sizes_arr = np.array(sizes, dtype=np.int64)
    cond_var = conditional_var_u(sizes_arr, draws, contrast)
    cond_mean = conditional_mean_u(sizes_arr, draws, contrast)
    return (
        float(cond_var.mean()),
        float(cond_mean.var(ddof=1)),
        float(cond_var.std(ddof=1) / np.sqrt(replicates)),
        redrawn,
    )


@lru_cache(maxsize=65536)
def _var_two_sample_cached(
    sizes: tuple[int, int], theta_hat: float, replicates: int, seed: int
) -> tuple[float, float, float, int]:
    draws, redrawn = _null_count_draws(sizes, theta_hat, 1, replicates, seed)
    cond_var = conditional_var_two_sample(draws)
    cond_mean = conditional_mean_two_sample(sizes, draws)
    return (
        float(cond_var.mean()),
        float(cond_mean.var(ddof=1)),
        float(cond_var.std(ddof=1) / np.sqrt(replicates)),
        redrawn,
    )


def _validate(sizes: Sequence[int], theta_hat: float) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("at least two group sizes are required")
    if any(s < 1 for s in sizes):
        raise ValueError("group sizes must be positive")
    if not 0 < theta_hat <= 1:
        raise ValueError("theta_hat must be in (0, 1]")
    return sizes


def var_u_components(
    sizes: Sequence[int],
    theta_hat: float,
    contrast: int,
    mc: McVarianceConfig | None = None,
) -> tuple[float, float, float, int]:
    """(mean conditional variance, variance of conditional means,
    standard error of the first term, redrawn degenerate draws) for U_i."""
    mc = mc or McVarianceConfig()
    sizes = _validate(sizes, theta_hat)
    if not 1 <= contrast <= len(sizes) - 1:
        raise ValueError(f"contrast must be in 1..{len(sizes) - 1}")
    return _var_u_cached(sizes, float(theta_hat), int(contrast), mc.replicates, mc.seed)


def estimate_var_u(
    sizes: Sequence[int],
    theta_hat: float,
    contrast: int,
    mc: McVarianceConfig | None = None,
) -> float:
    """Null variance of the truncated contrast U_i by the law of total variance."""
    mean_cond_var, var_cond_mean, _, _ = var_u_components(sizes, theta_hat, contrast, mc)
    return mean_cond_var + var_cond_mean


def estimate_var_two_sample(
    sizes: Sequence[int], theta_hat: float, mc: McVarianceConfig | None = None
) -> float:
    """Null variance of the two-sample truncated statistic s.

    Shares the count-draw stream of contrast 1, so with equal group sizes
    this is exactly 1/(4 N^2) times the two-group contrast variance.
    """
    mc = mc or McVarianceConfig()
    sizes = _validate(sizes, theta_hat)
    if len(sizes) != 2:
        raise ValueError("exactly two group sizes are required")
    mean_cond_var, var_cond_mean, _, _ = _var_two_sample_cached(
        sizes, float(theta_hat), mc.replicates, mc.seed
    )
    return mean_cond_var + var_cond_mean
