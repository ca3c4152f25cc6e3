"""Conditional-moment formulas and the total-variance estimators.

The conditional formulas are checked against tiny configurations where the
retained pool can be enumerated by hand.
"""

from __future__ import annotations

import numpy as np
import pytest

from zerorank.errors import DegenerateVariance
from zerorank.mc_variance import (
    McVarianceConfig,
    conditional_mean_two_sample,
    conditional_mean_u,
    conditional_var_two_sample,
    conditional_var_u,
    estimate_var_two_sample,
    estimate_var_u,
    mean_theta_fraction,
    pooled_theta_fraction,
    var_u_components,
)


class TestConditionalMoments:
    def test_var_u_tiny_enumeration(self):
        # sizes (2,3), counts (1,2): keep (1,2), no retained zeros, pool of 3.
        # U_1 = 3 s_1 - 2 s_2 = 5 r_1 - 10 with r_1 uniform on {1,2,3}.
        var = conditional_var_u(np.array([2, 3]), np.array([[1, 2]]), 1)[0]
        assert var == pytest.approx(25 * 2 / 3)

    def test_mean_u_with_retained_zeros(self):
        # sizes (4,2), counts (1,2): p = 1 so keep (4,2); three retained zeros
        # at midrank 2; E[r_1] = 3*2 + 5 = 11, E[r_2] = 10; centers 3.5*keep.
        mean = conditional_mean_u(np.array([4, 2]), np.array([[1, 2]]), 1)[0]
        assert mean == pytest.approx(2 * (11 - 14) - 4 * (10 - 7))

    def test_two_sample_var_is_rank_sum_variance(self):
        # conditional variance of s is that of the group-1 non-zero rank-sum
        var = conditional_var_two_sample(np.array([[3, 4]]))[0]
        assert var == pytest.approx(3 * 4 * 8 / 12)

    def test_two_sample_mean_no_zeros(self):
        # equal sizes, no zeros kept: E[s | counts] = 0 by symmetry when
        # counts are equal, and the correction term vanishes
        mean = conditional_mean_two_sample((5, 5), np.array([[5, 5]]))[0]
        assert mean == pytest.approx(0.0)

    def test_two_sample_mean_with_zeros(self):
        # sizes (4,2), counts (1,2): descending pool has non-zeros on ranks
        # 1..3 and three tied zeros on ranks 4..6 (midrank 5)
        mean = conditional_mean_two_sample((4, 2), np.array([[1, 2]]))[0]
        pbar = (1 / 4 + 2 / 2) / 2
        correction = 0.25 * pbar * (1 - pbar) * (2 - 4)
        expected = (2 + 3 * 5) - (6 + 1) / 2 * 4 - correction
        assert mean == pytest.approx(expected)


class TestEstimators:
    def test_theta_one_is_exact(self):
        sizes = (21, 30, 45)
        mc = McVarianceConfig(replicates=500, seed=3)
        est = estimate_var_u(sizes, 1.0, 1, mc)
        exact = conditional_var_u(np.array(sizes), np.array([sizes]), 1)[0]
        assert est == pytest.approx(exact, rel=1e-12)

    def test_matches_closed_form_expectation(self):
        # E[Var(U_i | counts)] has a closed form under binomial counts
        sizes, theta = (21, 30, 45), 0.5
        mc = McVarianceConfig(replicates=100_000, seed=5)
        for contrast in (1, 2):
            mean_cv, _, se, _ = var_u_components(sizes, theta, contrast, mc)
            n_tot = sum(sizes)
            head = sum(sizes[:contrast])
            nxt = sizes[contrast]
            closed = (
                theta**2 / 12 * nxt * head * (head + nxt) * n_tot
                * (n_tot * theta + 3 - 2 * theta)
            )
            assert abs(mean_cv - closed) < 3 * se

    def test_memoized_and_deterministic(self):
        mc = McVarianceConfig(replicates=1000, seed=9)
        a = estimate_var_u((30, 40), 0.5, 1, mc)
        b = estimate_var_u((30, 40), 0.5, 1, mc)
        assert a == b
        c = estimate_var_u((30, 40), 0.5, 1, McVarianceConfig(replicates=1000, seed=10))
        assert a != c  # different stream

    def test_two_sample_shares_the_contrast_stream_at_equal_sizes(self):
        mc = McVarianceConfig(replicates=2000, seed=1)
        n = 35
        theta = pooled_theta_fraction((12, 19), (n, n))
        var_u = estimate_var_u((n, n), theta, 1, mc)
        var_s = estimate_var_two_sample((n, n), theta, mc)
        assert var_u == pytest.approx(4 * n * n * var_s, rel=1e-12)

    def test_mostly_degenerate_draws_raise(self):
        mc = McVarianceConfig(replicates=1000, seed=2)
        with pytest.raises(DegenerateVariance):
            estimate_var_u((4, 4), 0.01, 1, mc)

    def test_validation(self):
        with pytest.raises(ValueError):
            estimate_var_u((10, 20), 0.0, 1)
        with pytest.raises(ValueError):
            estimate_var_u((10, 20), 0.5, 2)
        with pytest.raises(ValueError):
            estimate_var_two_sample((10, 20, 30), 0.5)
        with pytest.raises(ValueError):
            McVarianceConfig(replicates=10)


class TestThetaFractions:
    def test_pooled_and_mean_coincide_at_equal_sizes(self):
        for n1 in range(0, 13):
            for n2 in range(0, 13):
                if n1 + n2 == 0:
                    continue
                assert pooled_theta_fraction((n1, n2), (13, 13)) == mean_theta_fraction(
                    (n1, n2), (13, 13)
                )

    def test_pooled_weights_by_size(self):
        assert pooled_theta_fraction((1, 2), (10, 20)) == pytest.approx(0.1)
        assert mean_theta_fraction((1, 2), (10, 20)) == pytest.approx(0.1)
        assert pooled_theta_fraction((5, 2), (10, 20)) == pytest.approx(7 / 30)
        assert mean_theta_fraction((5, 2), (10, 20)) == pytest.approx(0.3)
