"""Tests for summary statistics and KDE."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popcal.summaries import (
    GMMCollapseError,
    ReferenceGMM,
    SummaryVector,
    fit_gmm2_em,
    gaussian_kde,
    gmm_score,
    moment_summary_bivariate,
    silverman_bandwidth,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def _avg_loglik(params, data):
    mu1, mu2, sd1, sd2, w = params
    l1 = -0.5 * np.log(2 * np.pi) - np.log(sd1) - 0.5 * ((data - mu1) / sd1) ** 2
    l2 = -0.5 * np.log(2 * np.pi) - np.log(sd2) - 0.5 * ((data - mu2) / sd2) ** 2
    return float(np.mean(np.logaddexp(np.log(w) + l1, np.log(1 - w) + l2)))


def _fd_gradient(params, data, h=1e-6):
    params = np.asarray(params, dtype=float)
    grad = np.empty(5)
    for i in range(5):
        hi = h * max(1.0, abs(params[i]))
        up, dn = params.copy(), params.copy()
        up[i] += hi
        dn[i] -= hi
        grad[i] = (_avg_loglik(up, data) - _avg_loglik(dn, data)) / (2 * hi)
    return grad


# -------------------------------------------------------------------- types


def test_summary_vector_validates():
    with pytest.raises(ValueError):
        SummaryVector(np.array([1.0, 2.0]), ("a",))
    with pytest.raises(ValueError):
        SummaryVector(np.array([1.0, np.nan]), ("a", "b"))


# ----------------------------------------------------------------- EM fits


def test_fit_gmm2_on_single_gaussian_matches_density():
    data = rng(1).standard_normal(10_000)
    ref = fit_gmm2_em(data, seeds=(0, 1))
    grid = np.linspace(-4, 4, 801)
    fitted = ref.weight * np.exp(-0.5 * ((grid - ref.mu1) / ref.sd1) ** 2) / (ref.sd1 * math.sqrt(2 * math.pi)) + (
        1 - ref.weight
    ) * np.exp(-0.5 * ((grid - ref.mu2) / ref.sd2) ** 2) / (ref.sd2 * math.sqrt(2 * math.pi))
    target = np.exp(-0.5 * grid**2) / math.sqrt(2 * math.pi)
    l1 = np.trapezoid(np.abs(fitted - target), grid)
    assert l1 < 0.02


def test_fit_gmm2_recovers_output_mixture_means():
    g = rng(2)
    n = 5000
    pick = g.random(n) < 1.0 / 3.0
    x = np.where(pick, 0.3 + 0.015 * g.standard_normal(n), 0.5 + 0.043 * g.standard_normal(n))
    y = x + 0.045 * g.standard_normal(n)
    ref = fit_gmm2_em(y, seeds=(0, 1, 2))
    assert abs(ref.mu1 - 0.3) < 0.02
    assert abs(ref.mu2 - 0.5) < 0.02
    assert ref.mu1 < ref.mu2


def test_fit_gmm2_collapse_on_identical_values():
    with pytest.raises((GMMCollapseError, ValueError)):
        fit_gmm2_em(np.full(10, 1.25))


def test_fit_gmm2_requires_ten_points():
    with pytest.raises(ValueError):
        fit_gmm2_em(np.arange(9, dtype=float))


# -------------------------------------------------------------------- score


def test_score_vanishes_at_the_fit():
    data = rng(3).standard_normal(2000) * 0.5 + np.where(rng(4).random(2000) < 0.4, -1.0, 1.0)
    ref = fit_gmm2_em(data, seeds=(0, 1))
    score = gmm_score(ref, data).values
    assert np.max(np.abs(score)) < 1e-4


def test_score_sign_under_shift():
    data = rng(5).standard_normal(3000)
    ref = fit_gmm2_em(data, seeds=(0,))
    score = gmm_score(ref, data + 0.01).values
    assert score[0] > 0 and score[1] > 0


def test_score_matches_finite_differences_random_pairs():
    g = rng(6)
    worst = 0.0
    for _ in range(100):
        ref = ReferenceGMM(
            mu1=float(g.uniform(-1, 0)),
            mu2=float(g.uniform(0.2, 1.5)),
            sd1=float(g.uniform(0.3, 1.2)),
            sd2=float(g.uniform(0.3, 1.2)),
            weight=float(g.uniform(0.15, 0.85)),
            n_iter=0,
            loglik=0.0,
        )
        data = g.standard_normal(200) * g.uniform(0.5, 1.5) + g.uniform(-1, 1)
        analytic = gmm_score(ref, data).values
        numeric = _fd_gradient((ref.mu1, ref.mu2, ref.sd1, ref.sd2, ref.weight), data)
        rel = np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8))
        worst = max(worst, rel)
    assert worst < 1e-5


# ------------------------------------------------------------------ moments


def test_bivariate_moments_hand_example():
    out = moment_summary_bivariate(np.array([[0.0, 0.0], [2.0, 2.0]])).values
    np.testing.assert_allclose(out, [1.0, 1.0, 2.0, 2.0, 2.0])


def test_bivariate_moments_constant_column():
    data = np.column_stack([rng(7).standard_normal(50), np.full(50, 3.0)])
    out = moment_summary_bivariate(data).values
    assert out[3] == 0.0 and out[4] == 0.0


def test_bivariate_moments_input_validation():
    with pytest.raises(ValueError):
        moment_summary_bivariate(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        moment_summary_bivariate(np.zeros((5, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bivariate_moments_permutation_invariant(seed):
    g = np.random.default_rng(seed)
    data = g.standard_normal((25, 2))
    shuffled = data[g.permutation(25)]
    np.testing.assert_allclose(
        moment_summary_bivariate(data).values,
        moment_summary_bivariate(shuffled).values,
        rtol=1e-12,
        atol=1e-15,
    )


# ---------------------------------------------------------------------- KDE


def test_kde_single_point_is_the_kernel():
    out = gaussian_kde(np.array([0.0]), np.array([0.0]), bandwidth=1.0)
    assert math.isclose(out[0], 1.0 / math.sqrt(2 * math.pi), rel_tol=1e-12)


def test_silverman_rule_closed_form():
    data = rng(8).standard_normal(1000)
    assert math.isclose(silverman_bandwidth(data), 1.06 * data.std(ddof=1) * 1000 ** (-0.2), rel_tol=1e-12)


def test_kde_deterministic_and_translation_equivariant():
    data = rng(9).standard_normal(300)
    grid = np.linspace(-3, 3, 101)
    a = gaussian_kde(data, grid, bandwidth=0.25)
    b = gaussian_kde(data, grid, bandwidth=0.25)
    np.testing.assert_array_equal(a, b)
    shifted = gaussian_kde(data + 1.5, grid + 1.5, bandwidth=0.25)
    np.testing.assert_allclose(shifted, a, rtol=0, atol=1e-12)


def test_kde_integrates_to_one():
    data = rng(10).standard_normal(500)
    h = silverman_bandwidth(data)
    grid = np.linspace(data.min() - 5 * h, data.max() + 5 * h, 4001)
    total = np.trapezoid(gaussian_kde(data, grid), grid)
    assert 0.99 <= total <= 1.0 + 1e-9


def test_kde_input_validation():
    with pytest.raises(ValueError):
        gaussian_kde(np.array([0.0, 1.0]), np.array([0.0, 1.0]), bandwidth=0.0)
    with pytest.raises(ValueError):
        gaussian_kde(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
