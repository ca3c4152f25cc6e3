"""Group-label and within-subject permutation engines."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from scipy.stats import kstest

from helpers import draw_group
from zerorank.errors import DegenerateConstant
from zerorank.k_sample import McVarianceConfig
from zerorank.permutation import (
    LongFormat,
    _observed_outcome,
    _PooledContributions,
    _StatisticEngine,
    _permuted_labels,
    perm_test_groups,
    perm_test_within_subject,
)
from zerorank.rank_core import GroupSample
from zerorank.two_sample import wilcoxon_standard


def g(*values) -> GroupSample:
    return GroupSample(np.array(values, dtype=float))


class TestPermTestGroups:
    def test_matches_exhaustive_enumeration(self):
        x, y = g(1, 2), g(3, 4)
        observed = wilcoxon_standard(x, y).statistic
        pool = [1.0, 2.0, 3.0, 4.0]
        hits = total = 0
        for pick in combinations(range(4), 2):
            left = [pool[i] for i in pick]
            right = [pool[i] for i in range(4) if i not in pick]
            stat = wilcoxon_standard(
                GroupSample(np.array(left)), GroupSample(np.array(right))
            ).statistic
            total += 1
            hits += stat >= observed - 1e-12
        exact = hits / total
        result = perm_test_groups([x, y], "w", permutations=4000, seed=3)
        se = np.sqrt(exact * (1 - exact) / 4000)
        assert result.p_value == pytest.approx(exact, abs=3 * se + 1e-3)

    def test_symmetric_observed_zero_gives_p_one(self):
        result = perm_test_groups([g(1, 2), g(1, 2)], "w", permutations=200, seed=0)
        assert result.observed == 0
        assert result.p_value == 1

    def test_add_one_floor(self):
        x = g(*range(1, 9))
        y = g(*range(100, 108))
        result = perm_test_groups([x, y], "w", permutations=100, seed=1)
        assert result.p_value >= 1 / 101
        assert result.p_value <= 3 / 101

    def test_reproducible(self):
        rng = np.random.default_rng(2)
        groups = [draw_group(rng, 0.5, 2, 2, 25) for _ in range(2)]
        mc = McVarianceConfig(replicates=1000, seed=5)
        a = perm_test_groups(groups, "tw", permutations=500, seed=9, mc=mc)
        b = perm_test_groups(groups, "tw", permutations=500, seed=9, mc=mc)
        assert (a.p_value, a.exceedances) == (b.p_value, b.exceedances)

    def test_degenerate_observed_raises(self):
        with pytest.raises(DegenerateConstant):
            perm_test_groups([g(1, 1), g(1, 1)], "w", permutations=100, seed=0)

    def test_requires_minimum_permutations(self):
        with pytest.raises(ValueError):
            perm_test_groups([g(1, 2), g(3, 4)], "w", permutations=10, seed=0)

    @pytest.mark.parametrize("statistic", ["w", "tw", "kw", "tkw"])
    def test_fast_path_equals_scalar_statistics(self, statistic):
        rng = np.random.default_rng(4)
        sizes = [11, 17] if statistic in ("w", "tw") else [9, 12, 15]
        groups = [draw_group(rng, 0.6, 2, 2, n) for n in sizes]
        mc = McVarianceConfig(replicates=1000, seed=2)
        observed = _observed_outcome(statistic, groups, mc)
        pooled = np.concatenate([grp.values for grp in groups])
        contrib = _PooledContributions(pooled, sizes)
        engine = _StatisticEngine(statistic, contrib, observed, mc)
        base = np.repeat(np.arange(len(sizes), dtype=np.int8), sizes)
        labels = _permuted_labels(7, range(40), base)
        fast, degenerate = engine.batch(labels)
        for row in range(40):
            if degenerate[row]:
                continue
            regroups = [
                GroupSample(pooled[labels[row] == k]) for k in range(len(sizes))
            ]
            ref = _observed_outcome(statistic, regroups, mc).statistic
            assert fast[row] == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_degenerate_permutations_counted_conservatively(self):
        # one lone non-zero in a size-1 group: relabelings that move the
        # non-zero away leave floor(p * 1) = 0, an undefined truncation
        x = g(5)
        y = g(0, 0, 0, 1, 2)
        result = perm_test_groups([x, y], "tw", permutations=300, seed=6,
                                  mc=McVarianceConfig(replicates=500, seed=1))
        assert result.degenerate > 0
        assert result.exceedances >= result.degenerate

    def test_validity_under_exchangeability(self):
        # permutation p-values never reject more often than the level
        rng = np.random.default_rng(8)
        mc = McVarianceConfig(replicates=500, seed=3)
        pvals = []
        for _ in range(400):
            groups = [draw_group(rng, 0.5, 2, 2, 20) for _ in range(2)]
            try:
                pvals.append(
                    perm_test_groups(groups, "w", permutations=199, seed=11, mc=mc).p_value
                )
            except DegenerateConstant:
                continue
        pvals = np.array(pvals)
        for alpha in (0.05, 0.2):
            rate = (pvals <= alpha).mean()
            assert rate <= alpha + 3 * np.sqrt(alpha * (1 - alpha) / pvals.size)


class TestPermTestWithinSubject:
    def test_constant_subjects_give_p_one(self):
        records = tuple(
            (f"s{i}", t, float(i + 1)) for i in range(5) for t in ("t0", "t1", "t2")
        )
        result = perm_test_within_subject(LongFormat(records), "kw",
                                          permutations=200, seed=0)
        assert result.p_value == 1

    def test_matches_exhaustive_enumeration_two_by_two(self):
        values = {("s1", "a"): 1.0, ("s1", "b"): 4.0, ("s2", "a"): 2.0, ("s2", "b"): 9.0}
        records = tuple((s, t, v) for (s, t), v in values.items())
        data = LongFormat(records)

        def stat(v1a, v1b, v2a, v2b):
            return wilcoxon_standard(g(v1a, v2a), g(v1b, v2b)).statistic

        observed = stat(1, 4, 2, 9)
        outcomes = [
            stat(1, 4, 2, 9), stat(4, 1, 2, 9), stat(1, 4, 9, 2), stat(4, 1, 9, 2)
        ]
        exact = np.mean([o >= observed - 1e-12 for o in outcomes])
        result = perm_test_within_subject(data, "kw", permutations=4000, seed=1)
        se = np.sqrt(exact * (1 - exact) / 4000)
        assert result.p_value == pytest.approx(exact, abs=3 * se + 1e-3)

    def test_single_timepoint_subjects_dropped(self):
        records = (
            ("s1", "a", 1.0), ("s1", "b", 2.0),
            ("s2", "a", 3.0), ("s2", "b", 1.0),
            ("lonely", "a", 9.0),
        )
        result = perm_test_within_subject(LongFormat(records), "kw",
                                          permutations=120, seed=2)
        assert result.notes["dropped_subjects"] == 1
        assert result.outcome.n_retained == (2, 2)

    def test_all_subjects_dropped_raises(self):
        records = (("s1", "a", 1.0), ("s2", "b", 2.0))
        with pytest.raises(ValueError):
            perm_test_within_subject(LongFormat(records), "kw", permutations=120, seed=0)

    def test_duplicate_subject_timepoint_rejected(self):
        with pytest.raises(ValueError):
            LongFormat((("s1", "a", 1.0), ("s1", "a", 2.0)))

    def test_null_pvalues_uniform(self):
        # exchangeable-within-subject data: p-values must sit in the KS band
        rng = np.random.default_rng(9)
        mc = McVarianceConfig(replicates=1000, seed=4)
        pvals = []
        for _ in range(600):
            records = []
            for s in range(8):
                for t in ("t0", "t1", "t2", "t3"):
                    value = rng.beta(2, 2) if rng.random() < 0.7 else 0.0
                    records.append((f"s{s}", t, value))
            try:
                pvals.append(
                    perm_test_within_subject(
                        LongFormat(tuple(records)), "tkw",
                        permutations=199, seed=13, mc=mc,
                    ).p_value
                )
            except Exception:
                continue
        stat = kstest(pvals, "uniform").statistic
        # valid (slightly conservative) discrete p-values: generous band
        assert stat < 1.63 / np.sqrt(len(pvals)) + 1 / 200
