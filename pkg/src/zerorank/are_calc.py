"""Asymptotic relative efficiency of the truncated tests vs the standard ones.

The efficiency of the truncated test relative to its untruncated counterpart
is the ratio of expected normalized statistics under the alternative; values
above 1 mean the truncated test needs fewer observations for the same power.
Inputs are the per-group non-zero probabilities theta and the stochastic-
ordering effect sizes of the continuous parts,

    delta(f, g) = P(x < y) + P(x = y)/2 - 1/2,   x ~ f, y ~ g.

For Beta(alpha, 1) continuous parts delta has the closed form
alpha_k / (alpha_i + alpha_k) - 1/2; for anything else use the Monte-Carlo
estimator ``delta_fg_mc``.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedARE
from .rng import generator


def _check_theta(theta: float, name: str) -> None:
    if not 0 < theta <= 1:
        raise ValueError(f"{name} must be in (0, 1], got {theta}")


def are_two_sample(theta1: float, theta2: float, delta_fg: float) -> float:
    """Efficiency of the truncated vs standard Wilcoxon rank-sum test.

    With theta = (theta1 + theta2)/2, theta_m = max(theta1, theta2) and
    dtheta = theta2 - theta1:

        (1/theta^2) * (1 - theta + theta^2/3)/(1 - theta + 1/3)
            * [(theta1 theta2 delta + dtheta theta_m / 2)
               / (theta1 theta2 delta + dtheta / 2)]^2

    Raises UndefinedARE when the denominator effect cancels exactly.
    """
    _check_theta(theta1, "theta1")
    _check_theta(theta2, "theta2")
    if abs(delta_fg) > 0.5:
        raise ValueError("delta_fg must lie in [-1/2, 1/2]")
    theta = (theta1 + theta2) / 2.0
    theta_m = max(theta1, theta2)
    dtheta = theta2 - theta1
    variance_ratio = (1 - theta + theta**2 / 3) / (1 - theta + 1.0 / 3.0)
    if dtheta == 0:
        # numerator and denominator effects coincide, so the squared ratio
        # is 1 for every delta (including delta = 0, where it is a 0/0 limit)
        return variance_ratio / theta**2
    denom = theta1 * theta2 * delta_fg + dtheta / 2.0
    if denom == 0:
        raise UndefinedARE("zero-proportion and continuous effects cancel exactly")
    numer = theta1 * theta2 * delta_fg + dtheta * theta_m / 2.0
    return variance_ratio / theta**2 * (numer / denom) ** 2


def _expectation_cores(thetas: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """A_i = sum_{j<=i} sum_{k!=j} th_j th_k d_{jk} - i th_{i+1} sum_{k!=i+1} th_k d_{i+1,k}."""
    k = thetas.size
    weighted = thetas[:, None] * thetas[None, :] * deltas
    row_sums = weighted.sum(axis=1)  # diagonal of deltas is zero
    idx = np.arange(1, k, dtype=float)
    return np.cumsum(row_sums)[:-1] - idx * row_sums[1:]


def are_k_sample(thetas, deltas) -> float:
    """Efficiency of the truncated vs standard Kruskal-Wallis test.

    ``thetas`` is the length-K vector of non-zero probabilities and
    ``deltas`` the antisymmetric K x K matrix of pairwise effect sizes of
    the continuous parts.  With A_i the expected contrast core,
    B_i = i theta_{i+1} - sum_{j<=i} theta_j, theta the mean of the thetas
    and theta_K their maximum:

        sum_i (A_i + K theta_K B_i / 2)^2 / (theta^2 i (i+1) (4/3 - theta))
        -----------------------------------------------------------------
        sum_i (A_i + K B_i / 2)^2 / (i (i+1) (theta^2/3 + 1 - theta))

    Reduces to :func:`are_two_sample` at K = 2.
    """
    thetas = np.asarray(thetas, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if thetas.ndim != 1 or thetas.size < 2:
        raise ValueError("thetas must be a vector of length K >= 2")
    for i, th in enumerate(thetas):
        _check_theta(float(th), f"thetas[{i}]")
    k = thetas.size
    if deltas.shape != (k, k):
        raise ValueError(f"deltas must be a {k}x{k} matrix")
    if not np.allclose(deltas, -deltas.T, atol=1e-12):
        raise ValueError("deltas must be antisymmetric with zero diagonal")
    if np.abs(deltas).max() > 0.5 + 1e-12:
        raise ValueError("effect sizes must lie in [-1/2, 1/2]")

    theta = thetas.mean()
    theta_max = thetas.max()
    idx = np.arange(1, k, dtype=float)
    cores = _expectation_cores(thetas, deltas)
    gaps = idx * thetas[1:] - np.cumsum(thetas)[:-1]

    denom_terms = (cores + k * gaps / 2.0) ** 2 / (idx * (idx + 1) * (theta**2 / 3 + 1 - theta))
    denominator = denom_terms.sum()
    if denominator == 0:
        raise UndefinedARE("all expected contrasts vanish under the alternative")
    numer_terms = (cores + k * theta_max * gaps / 2.0) ** 2 / (
        theta**2 * idx * (idx + 1) * (4.0 / 3.0 - theta)
    )
    return float(numer_terms.sum() / denominator)


def delta_beta(alpha_i: float, alpha_k: float) -> float:
    """Effect size between Beta(alpha_i, 1) and Beta(alpha_k, 1) parts.

    Closed form alpha_k/(alpha_i + alpha_k) - 1/2; antisymmetric in its
    arguments and zero when the shapes coincide.
    """
    if alpha_i <= 0 or alpha_k <= 0:
        raise ValueError("Beta shape parameters must be positive")
    return alpha_k / (alpha_i + alpha_k) - 0.5


def beta_delta_matrix(alphas) -> np.ndarray:
    """Antisymmetric effect-size matrix for Beta(alpha_k, 1) continuous parts."""
    alphas = np.asarray(alphas, dtype=float)
    if (alphas <= 0).any():
        raise ValueError("Beta shape parameters must be positive")
    return alphas[None, :] / (alphas[:, None] + alphas[None, :]) - 0.5


def delta_fg_mc(
    f: tuple[float, float],
    g: tuple[float, float],
    draws: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Monte-Carlo estimate of delta(f, g) for Beta continuous parts.

    ``f`` and ``g`` are (alpha, beta) shape pairs.  Uses paired independent
    draws; the estimator is deterministic for a fixed seed.
    """
    if draws < 1000:
        raise ValueError("draws must be at least 1000")
    af, bf = f
    ag, bg = g
    if min(af, bf, ag, bg) <= 0:
        raise ValueError("Beta shape parameters must be positive")
    rng = generator(seed)
    x = rng.beta(af, bf, size=draws)
    y = rng.beta(ag, bg, size=draws)
    return float(np.mean((x < y) + 0.5 * (x == y)) - 0.5)
