"""Empirical null distributions by permutation.

Two schemes:

* group-label permutation for independent samples: pool all observations,
  reassign group labels uniformly at random preserving group sizes;
* within-subject permutation for repeated measurements: permute timepoint
  labels independently inside each subject, treating subjects as
  independent exchangeable blocks.

p-values use the add-one estimator (1 + #{permuted >= observed}) / (1 + B),
which never drops below 1/(1 + B); ties with the observed statistic count
as exceedances.  Permutations whose statistic is undefined (a group keeps
nothing after truncation) also count as exceedances — the conservative
choice — and are reported; more than 1% of them triggers a warning.

Permutation b draws its randomness from a Philox stream keyed (seed, b),
so results are reproducible for a fixed seed regardless of batch size.

The permuted statistics are computed vectorized from per-element midrank
contributions (the pooled values, and hence all midranks, are fixed under
relabeling); the arithmetic reproduces the scalar test functions exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import rank_core
from .k_sample import (
    McVarianceConfig,
    kruskal_wallis_standard,
    kruskal_wallis_truncated,
    weighted_contrasts,
)
from .mc_variance import estimate_var_two_sample, mean_theta_fraction
from .rank_core import GroupSample
from .two_sample import TestOutcome, wilcoxon_standard, wilcoxon_truncated

log = logging.getLogger(__name__)

_BATCH = 256

STATISTICS = ("w", "tw", "kw", "tkw")


@dataclass(frozen=True)
class PermutationResult:
    """Observed statistic and its permutation p-value."""

    observed: float
    p_value: float
    permutations: int
    exceedances: int
    degenerate: int
    outcome: TestOutcome
    notes: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class LongFormat:
    """Repeated-measurement records (subject, timepoint, value).

    (subject, timepoint) pairs must be unique and values non-negative.
    Timepoint order (and hence contrast order for the K-sample statistics)
    is first-appearance order.
    """

    records: tuple[tuple[str, str, float], ...]

    def __post_init__(self) -> None:
        seen = set()
        for subject, timepoint, value in self.records:
            if (subject, timepoint) in seen:
                raise ValueError(f"duplicate record for {(subject, timepoint)}")
            seen.add((subject, timepoint))
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"value for {(subject, timepoint)} must be non-negative")

    @property
    def timepoints(self) -> list[str]:
        out: list[str] = []
        for _, timepoint, _ in self.records:
            if timepoint not in out:
                out.append(timepoint)
        return out

    def by_subject(self) -> dict[str, list[tuple[str, float]]]:
        out: dict[str, list[tuple[str, float]]] = {}
        for subject, timepoint, value in self.records:
            out.setdefault(subject, []).append((timepoint, value))
        return out


def _observed_outcome(
    statistic: str, groups: Sequence[GroupSample], mc: McVarianceConfig
) -> TestOutcome:
    if statistic == "w":
        return wilcoxon_standard(groups[0], groups[1])
    if statistic == "tw":
        return wilcoxon_truncated(groups[0], groups[1], mc=mc)
    if statistic == "kw":
        return kruskal_wallis_standard(groups)
    if statistic == "tkw":
        return kruskal_wallis_truncated(groups, mc)
    raise ValueError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")


class _PooledContributions:
    """Fixed per-element quantities reused by every permutation.

    For element j of the pooled data: ``full_rank[j]`` is its ascending
    midrank in the full pool, ``nonzero_rank[j]`` its ascending midrank
    among the non-zero values (0 for zeros), ``is_nonzero[j]`` an indicator.
    Group sums of these three vectors determine every supported statistic.
    """

    def __init__(self, pooled: np.ndarray, sizes: Sequence[int]):
        self.pooled = pooled
        self.sizes = np.array([int(s) for s in sizes])
        self.full_rank = rank_core.midranks(pooled, rank_core.ASCENDING)
        self.is_nonzero = (pooled > 0).astype(float)
        total_zeros = int((pooled == 0).sum())
        nonzero_rank = np.where(pooled > 0, self.full_rank - total_zeros, 0.0)
        self.nonzero_rank = nonzero_rank
        self.total_nonzero = int(self.is_nonzero.sum())

    def group_sums(self, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-group (non-zero counts, full-rank sums, non-zero-rank sums).

        ``labels`` is a (batch, n) matrix of group indices; outputs are
        (batch, K).
        """
        k_groups = self.sizes.size
        shape = labels.shape[:-1] + (k_groups,)
        counts = np.empty(shape)
        full_sums = np.empty(shape)
        nonzero_sums = np.empty(shape)
        for g in range(k_groups):
            mask = labels == g
            counts[..., g] = (self.is_nonzero * mask).sum(axis=-1)
            full_sums[..., g] = (self.full_rank * mask).sum(axis=-1)
            nonzero_sums[..., g] = (self.nonzero_rank * mask).sum(axis=-1)
        return counts, full_sums, nonzero_sums


def _truncated_group_quantities(sizes: np.ndarray, counts: np.ndarray):
    """Keep counts, retained totals and pooled floor per permutation row."""
    counts_int = counts.astype(np.int64)
    keep = np.max(
        counts_int[..., None, :] * sizes[:, None] // sizes[None, :], axis=-1
    )
    pooled_keep = np.max(counts_int * int(sizes.sum()) // sizes, axis=-1)
    return keep, pooled_keep


def _truncated_rank_sums(
    contrib: _PooledContributions, counts: np.ndarray, nonzero_sums: np.ndarray
):
    """Ascending rank-sums of every group in the truncated pool."""
    sizes = contrib.sizes
    keep, pooled_keep = _truncated_group_quantities(sizes, counts)
    retained_total = keep.sum(axis=-1)
    zeros = (retained_total - counts.sum(axis=-1))[..., None]
    rank_sums = (
        nonzero_sums
        + counts * zeros
        + (keep - counts) * (zeros + 1.0) / 2.0
    )
    return rank_sums, keep, pooled_keep


class _StatisticEngine:
    """Vectorized recomputation of one statistic under relabelings."""

    def __init__(
        self,
        statistic: str,
        contrib: _PooledContributions,
        observed: TestOutcome,
        mc: McVarianceConfig,
    ):
        self.statistic = statistic
        self.contrib = contrib
        self.mc = mc
        # null variances are relabeling-invariant for w/kw (fixed pool and
        # tie pattern) and for tkw (pooled theta_hat is a function of the
        # pool only), so the observed outcome's values are reused verbatim
        if statistic == "w":
            self.variance = observed.notes["variance"]
        elif statistic in ("kw", "tkw"):
            self.variances = np.asarray(observed.notes["contrast_variances"], dtype=float)

    def batch(self, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(statistics, degenerate mask) for a batch of label rows."""
        contrib = self.contrib
        sizes = contrib.sizes
        n_tot = int(sizes.sum())
        counts, full_sums, nonzero_sums = contrib.group_sums(labels)
        degenerate = np.zeros(labels.shape[0], dtype=bool)

        if self.statistic == "w":
            centered = full_sums[..., 0] - (n_tot + 1) * sizes[0] / 2.0
            return centered**2 / self.variance, degenerate

        if self.statistic == "kw":
            centered = full_sums - (n_tot + 1) * sizes / 2.0
            contrasts = weighted_contrasts(sizes, centered)
            return (contrasts**2 / self.variances).sum(axis=-1), degenerate

        rank_sums, keep, pooled_keep = _truncated_rank_sums(contrib, counts, nonzero_sums)
        degenerate = (keep == 0).any(axis=-1)

        if self.statistic == "tw":
            n1_size, n2_size = (int(s) for s in sizes)
            # descending rank-sum of group 1 in the truncated pool
            retained_total = keep.sum(axis=-1)
            desc = keep[..., 0] * (retained_total + 1.0) - rank_sums[..., 0]
            pbar = (counts[..., 0] / n1_size + counts[..., 1] / n2_size) / 2.0
            correction = 0.25 * pbar * (1 - pbar) * (n2_size - n1_size)
            centered = desc - (pooled_keep + 1) / 2.0 * keep[..., 0] - correction
            # theta_hat depends only on n1 (n2 = pooled non-zeros - n1)
            variances = np.full(labels.shape[0], np.inf)
            n1 = counts[..., 0].astype(int)
            for value in np.unique(n1[~degenerate]):
                theta = mean_theta_fraction(
                    (int(value), self.contrib.total_nonzero - int(value)),
                    (n1_size, n2_size),
                )
                var = estimate_var_two_sample((n1_size, n2_size), theta, self.mc)
                variances[(n1 == value) & ~degenerate] = var
            return centered**2 / variances, degenerate

        if self.statistic == "tkw":
            centered = rank_sums - (pooled_keep[..., None] + 1) / 2.0 * keep
            contrasts = weighted_contrasts(sizes, centered)
            stats = (contrasts**2 / self.variances).sum(axis=-1)
            return stats, degenerate

        raise ValueError(f"unknown statistic {self.statistic!r}")


def _permuted_labels(seed: int, indices: range, base_labels: np.ndarray) -> np.ndarray:
    """Uniformly shuffled copies of ``base_labels``, one row per index.

    Row for permutation b is a pure function of (seed, b).
    """
    from .rng import generator

    n = base_labels.size
    out = np.empty((len(indices), n), dtype=base_labels.dtype)
    for row, b in enumerate(indices):
        u = generator(seed, b).random(n)
        out[row] = base_labels[np.argsort(u, kind="stable")]
    return out


def _within_subject_labels(
    seed: int, indices: range, base_labels: np.ndarray, blocks: list[np.ndarray]
) -> np.ndarray:
    """Timepoint labels shuffled independently inside each subject block."""
    from .rng import generator

    n = base_labels.size
    out = np.empty((len(indices), n), dtype=base_labels.dtype)
    for row, b in enumerate(indices):
        u = generator(seed, b).random(n)
        labels = base_labels.copy()
        for block in blocks:
            labels[block] = labels[block][np.argsort(u[block], kind="stable")]
        out[row] = labels
    return out


def _run_engine(
    engine: _StatisticEngine,
    observed_stat: float,
    permutations: int,
    label_maker,
) -> tuple[int, int]:
    exceedances = 0
    degenerate_total = 0
    for start in range(0, permutations, _BATCH):
        indices = range(start, min(start + _BATCH, permutations))
        labels = label_maker(indices)
        stats, degenerate = engine.batch(labels)
        exceedances += int(((stats >= observed_stat) | degenerate).sum())
        degenerate_total += int(degenerate.sum())
    return exceedances, degenerate_total


def _finalize(
    observed: TestOutcome,
    permutations: int,
    exceedances: int,
    degenerate: int,
) -> PermutationResult:
    if degenerate > 0.01 * permutations:
        log.warning(
            "%d of %d permutations degenerate (counted as exceedances)",
            degenerate,
            permutations,
        )
    p_value = (1 + exceedances) / (1 + permutations)
    return PermutationResult(
        observed=observed.statistic,
        p_value=p_value,
        permutations=permutations,
        exceedances=exceedances,
        degenerate=degenerate,
        outcome=observed,
        notes={"method": observed.method},
    )


def perm_test_groups(
    groups: Sequence[GroupSample],
    statistic: str = "tw",
    permutations: int = 10_000,
    seed: int = 0,
    mc: McVarianceConfig | None = None,
) -> PermutationResult:
    """Group-label permutation test for independent samples.

    Pools all observations and redistributes group labels uniformly at
    random, preserving group sizes.  The observed statistic must be
    computable (a degenerate observed configuration raises).
    """
    if permutations < 99:
        raise ValueError("at least 99 permutations are required")
    mc = mc or McVarianceConfig()
    observed = _observed_outcome(statistic, groups, mc)
    sizes = [g.N for g in groups]
    pooled = np.concatenate([g.values for g in groups])
    contrib = _PooledContributions(pooled, sizes)
    engine = _StatisticEngine(statistic, contrib, observed, mc)
    base_labels = np.repeat(np.arange(len(groups), dtype=np.int8), sizes)
    exceedances, degenerate = _run_engine(
        engine,
        observed.statistic,
        permutations,
        lambda idx: _permuted_labels(seed, idx, base_labels),
    )
    return _finalize(observed, permutations, exceedances, degenerate)


def perm_test_within_subject(
    data: LongFormat,
    statistic: str = "tkw",
    permutations: int = 10_000,
    seed: int = 0,
    mc: McVarianceConfig | None = None,
) -> PermutationResult:
    """Within-subject permutation test for repeated measurements.

    Permutes timepoint labels independently inside each subject; subjects
    with a single observed timepoint carry no information and are dropped
    with a warning.  The relabeled timepoint groups are scored with the
    selected K-sample statistic ('kw' or 'tkw').
    """
    if permutations < 99:
        raise ValueError("at least 99 permutations are required")
    if statistic not in ("kw", "tkw"):
        raise ValueError("within-subject permutation supports 'kw' or 'tkw'")
    mc = mc or McVarianceConfig()
    timepoints = data.timepoints
    if len(timepoints) < 2:
        raise ValueError("at least two timepoints are required")
    time_index = {t: i for i, t in enumerate(timepoints)}

    values: list[float] = []
    labels: list[int] = []
    blocks: list[np.ndarray] = []
    dropped = 0
    position = 0
    for subject, obs in data.by_subject().items():
        if len(obs) < 2:
            dropped += 1
            continue
        block = np.arange(position, position + len(obs))
        position += len(obs)
        blocks.append(block)
        for timepoint, value in obs:
            values.append(value)
            labels.append(time_index[timepoint])
    if dropped:
        log.warning("dropped %d subject(s) with fewer than two timepoints", dropped)
    if not blocks:
        raise ValueError("no subject has two or more observed timepoints")

    pooled = np.array(values)
    base_labels = np.array(labels, dtype=np.int8)
    sizes = np.bincount(base_labels, minlength=len(timepoints))
    if (sizes == 0).any():
        missing = [t for t, i in time_index.items() if sizes[i] == 0]
        raise ValueError(f"timepoints without usable observations: {missing}")

    groups = [
        GroupSample(pooled[base_labels == g]) for g in range(len(timepoints))
    ]
    observed = _observed_outcome(statistic, groups, mc)

    contrib = _PooledContributions(pooled, sizes)
    engine = _StatisticEngine(statistic, contrib, observed, mc)
    exceedances, degenerate = _run_engine(
        engine,
        observed.statistic,
        permutations,
        lambda idx: _within_subject_labels(seed, idx, base_labels, blocks),
    )
    result = _finalize(observed, permutations, exceedances, degenerate)
    result.notes["dropped_subjects"] = dropped
    return result
