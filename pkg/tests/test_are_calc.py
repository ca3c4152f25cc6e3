"""Closed-form efficiency calculators and the effect-size helpers."""

from __future__ import annotations

import numpy as np
import pytest

from zerorank.are_calc import (
    are_k_sample,
    are_two_sample,
    beta_delta_matrix,
    delta_beta,
    delta_fg_mc,
)
from zerorank.errors import UndefinedARE


class TestAreTwoSample:
    def test_no_zeros_is_exactly_one(self):
        assert are_two_sample(1, 1, 0.2) == 1.0
        assert are_two_sample(1, 1, -0.4) == 1.0

    def test_equal_thetas_hand_value(self):
        assert are_two_sample(0.5, 0.5, 0.1) == pytest.approx(2.8, rel=1e-12)

    def test_unequal_thetas_hand_value(self):
        assert are_two_sample(0.3, 0.8, 0.1) == pytest.approx(1.5536, abs=5e-4)

    def test_depends_only_on_theta_when_thetas_match(self):
        values = {are_two_sample(0.4, 0.4, d) for d in (-0.3, 0.0, 0.3)}
        assert len(values) == 1

    def test_decreasing_in_theta_for_fixed_gap(self):
        # strictly decreasing until theta ~ 0.87, where the curve bottoms
        # out and creeps up by ~2e-3 before theta2 reaches 1
        grid = np.linspace(0.2, 0.85, 66)
        values = [are_two_sample(t - 0.1, t + 0.1, 0.1) for t in grid]
        assert all(a > b for a, b in zip(values, values[1:]))
        tail = [are_two_sample(t - 0.1, min(t + 0.1, 1.0), 0.1) for t in (0.86, 0.9)]
        assert all(v == pytest.approx(values[-1], abs=0.01) for v in tail)

    def test_exact_cancellation_raises(self):
        # theta1 theta2 delta = -dtheta/2 exactly: 0.5 * 1.0 * (-0.5) = -0.25
        with pytest.raises(UndefinedARE):
            are_two_sample(0.5, 1.0, -0.5)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            are_two_sample(0, 0.5, 0.1)
        with pytest.raises(ValueError):
            are_two_sample(0.5, 0.5, 0.7)


class TestAreKSample:
    def test_no_zeros_is_exactly_one(self):
        deltas = beta_delta_matrix([1, 2, 3, 4, 5])
        assert are_k_sample([1] * 5, deltas) == 1.0

    def test_reduces_to_two_sample(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t1, t2 = rng.uniform(0.05, 1, size=2)
            d = rng.uniform(-0.45, 0.45)
            try:
                two = are_two_sample(t1, t2, d)
            except UndefinedARE:
                continue
            k = are_k_sample([t1, t2], np.array([[0, d], [-d, 0]]))
            assert k == pytest.approx(two, abs=1e-12)

    def test_increasing_shape_curve_above_one(self):
        deltas = beta_delta_matrix([1, 2, 3, 4, 5])
        values = [are_k_sample([t] * 5, deltas) for t in np.arange(0.1, 0.995, 0.05)]
        assert all(v > 1 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(1.0, abs=0.1)

    def test_rejects_non_antisymmetric_matrix(self):
        with pytest.raises(ValueError):
            are_k_sample([0.5, 0.5], np.array([[0.0, 0.1], [0.1, 0.0]]))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            are_k_sample([0.5], np.zeros((1, 1)))
        with pytest.raises(ValueError):
            are_k_sample([0.5, 0.5], np.zeros((3, 3)))


class TestDeltaBeta:
    def test_identical_shapes_give_zero(self):
        assert delta_beta(2.5, 2.5) == 0

    def test_plug_values(self):
        assert delta_beta(1, 2) == pytest.approx(1 / 6)
        assert delta_beta(2, 1) == pytest.approx(-1 / 6)

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.uniform(0.1, 10, size=2)
            assert delta_beta(a, b) == pytest.approx(-delta_beta(b, a), abs=1e-15)

    def test_matrix_matches_pairwise(self):
        alphas = [1.0, 2.0, 3.5]
        matrix = beta_delta_matrix(alphas)
        for i, ai in enumerate(alphas):
            for j, aj in enumerate(alphas):
                assert matrix[i, j] == pytest.approx(delta_beta(ai, aj))

    def test_rejects_nonpositive_shape(self):
        with pytest.raises(ValueError):
            delta_beta(0, 1)


class TestDeltaFgMc:
    def test_identical_laws_give_zero(self):
        draws = 200_000
        est = delta_fg_mc((2, 2), (2, 2), draws=draws, seed=0)
        assert abs(est) < 3 * np.sqrt(0.25 / draws)

    def test_matches_beta_closed_form(self):
        draws = 400_000
        est = delta_fg_mc((1, 1), (2, 1), draws=draws, seed=1)
        assert est == pytest.approx(1 / 6, abs=3 * np.sqrt(0.25 / draws))

    def test_reported_effect_for_shifted_betas(self):
        est = delta_fg_mc((2, 2.75), (2, 2), draws=400_000, seed=2)
        assert est == pytest.approx(0.10, abs=0.004)

    def test_deterministic_given_seed(self):
        a = delta_fg_mc((2, 3), (3, 2), draws=10_000, seed=7)
        b = delta_fg_mc((2, 3), (3, 2), draws=10_000, seed=7)
        assert a == b

    def test_rejects_tiny_draw_counts(self):
        with pytest.raises(ValueError):
            delta_fg_mc((2, 2), (2, 2), draws=10)
