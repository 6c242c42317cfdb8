import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from noisyplr.labels import (CountVector, DirichletMultinomial, Multinomial,
                             PosteriorPair, Truth, draw_counts, draw_counts_rows, entropy,
                             generate_dataset_counts, impute_missing, label_error_prob,
                             moments, posterior, read_counts, write_counts)


# posterior / error probability / entropy

def test_posterior_symmetric_point():
    assert posterior(np.array([1.0, -1.0]), np.array([2.0, 2.0])).p1 == 0.5


def test_posterior_saturates_without_overflow():
    with np.errstate(over="raise"):
        p = posterior(np.array([1.0]), np.array([800.0]))
    assert abs(p.p1 - 1.0) <= np.finfo(float).eps
    assert posterior(np.array([1.0]), np.array([-800.0])).p1 == 0.0


def test_posterior_log3():
    assert posterior(np.array([1.0]), np.array([math.log(3.0)])).p1 == pytest.approx(0.75)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_posterior_monotone(a, b):
    lo, hi = sorted((a, b))
    assert posterior([1.0], [lo]).p1 <= posterior([1.0], [hi]).p1


def test_posterior_pair_validation():
    assert PosteriorPair(0.3).p2 == pytest.approx(0.7)
    with pytest.raises(ValueError):
        PosteriorPair(1.5)


def test_label_error_prob_values():
    assert label_error_prob(PosteriorPair(0.5)) == 0.5
    assert label_error_prob(PosteriorPair(1.0)) == 0.0
    assert label_error_prob(PosteriorPair(0.9)) == pytest.approx(0.18)


def test_label_error_prob_maximised_at_half():
    grid = np.linspace(0, 1, 1001)
    assert grid[np.argmax(label_error_prob(grid))] == 0.5


def test_entropy_values():
    assert entropy(PosteriorPair(0.5)) == 1.0
    assert entropy(PosteriorPair(0.0)) == 0.0
    assert entropy(PosteriorPair(1.0)) == 0.0
    assert entropy(PosteriorPair(0.25)) == pytest.approx(0.811278, abs=1e-6)


@given(st.floats(0, 1))
def test_entropy_bounds(p):
    assert 0.0 <= entropy(p) <= 1.0


# noise models and moments

def test_model_validation():
    with pytest.raises(ValueError):
        Multinomial(0)
    with pytest.raises(ValueError):
        DirichletMultinomial(3, 0.0)
    with pytest.raises(ValueError):
        CountVector([0, 4], 3)


def test_moments_examples():
    for a0 in (0.1, 1.0, 100.0):
        assert moments(1, a0, 0.3)[1] == pytest.approx(0.21)
    assert moments(10, 1e12, 0.3)[1] == pytest.approx(2.1, rel=1e-9)
    assert moments(10, 10.0, 0.3) == (pytest.approx(3.0), pytest.approx(2.1 * 20 / 11))


def test_truth_model_requires_label():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        draw_counts(0.4, Truth(), rng)
    assert draw_counts(0.4, Truth(), rng, label=1) == 1


def test_m1_mean_is_posterior():
    rng = np.random.default_rng(1)
    for model in (Multinomial(1), DirichletMultinomial(1, 0.3), DirichletMultinomial(1, 50.0)):
        s = draw_counts(np.full(100_000, 0.5), model, rng)
        assert abs(s.mean() - 0.5) <= 0.005


def test_degenerate_posterior():
    rng = np.random.default_rng(2)
    for model in (Multinomial(7), DirichletMultinomial(7, 0.5)):
        assert np.all(draw_counts(np.ones(1000), model, rng) == 7)
        assert np.all(draw_counts(np.zeros(1000), model, rng) == 0)


def test_variance_matches_closed_form():
    rng = np.random.default_rng(3)
    s = draw_counts(np.full(100_000, 0.3), DirichletMultinomial(20, 10.0), rng)
    assert s.var(ddof=1) == pytest.approx(moments(20, 10.0, 0.3)[1], rel=0.05)


def test_monte_carlo_moments_random_triples():
    """Sample mean and variance within 3 standard errors of the closed forms."""
    rng = np.random.default_rng(0)
    k = 200_000
    for _ in range(50):
        m = int(rng.integers(1, 60))
        a0 = float(10 ** rng.uniform(-1, 3))
        p1 = float(rng.uniform(0.02, 0.98))
        s = draw_counts(np.full(k, p1), DirichletMultinomial(m, a0), rng).astype(float)
        mean, var = moments(m, a0, p1)
        assert abs(s.mean() - mean) <= 3 * math.sqrt(var / k)
        # se of the sample variance from the fourth central moment
        mu4 = np.mean((s - s.mean()) ** 4)
        se_var = math.sqrt(max(mu4 - var ** 2, 0.0) / k)
        assert abs(s.var(ddof=1) - var) <= 3 * se_var


def test_standardised_mean_errors_are_standard_normal():
    rng = np.random.default_rng(1)
    k = 20_000
    z = []
    for _ in range(200):
        m = int(rng.integers(1, 60))
        a0 = float(10 ** rng.uniform(-1, 3))
        p1 = float(rng.uniform(0.02, 0.98))
        s = draw_counts(np.full(k, p1), DirichletMultinomial(m, a0), rng)
        mean, var = moments(m, a0, p1)
        z.append((s.mean() - mean) / math.sqrt(var / k))
    assert stats.kstest(z, "norm").pvalue > 0.001


def test_small_alpha0_concentrates_on_extremes():
    rng = np.random.default_rng(5)
    m = 10
    s = draw_counts(np.full(100_000, 0.3), DirichletMultinomial(m, 1e-6), rng)
    assert np.mean((s > 0) & (s < m)) < 0.01
    assert np.mean(s == m) == pytest.approx(0.3, abs=0.01)


def test_large_alpha0_matches_multinomial():
    rng = np.random.default_rng(6)
    s = draw_counts(np.full(200_000, 0.3), DirichletMultinomial(10, 1e6), rng)
    assert s.var(ddof=1) == pytest.approx(2.1, rel=0.02)


def test_m1_joint_law_chi_square():
    rng = np.random.default_rng(7)
    x, beta = np.array([0.4, -1.2, 2.0]), np.array([1.0, 0.5, 0.3])
    p = posterior(x, beta).p1
    k = 100_000
    for model in (Multinomial(1), DirichletMultinomial(1, 2.0)):
        s = draw_counts(np.full(k, p), model, rng)
        obs = np.bincount(s, minlength=2)
        assert stats.chisquare(obs, [k * (1 - p), k * p]).pvalue > 0.001


# dataset-level generation

def test_truth_counts_equal_labels(rng):
    X = rng.standard_normal((50, 3))
    y = rng.integers(0, 2, 50)
    cv = generate_dataset_counts(X, np.zeros(3), Truth(), seed=1, labels=y)
    np.testing.assert_array_equal(cv.counts, y)
    assert cv.m == 1


def test_zero_coefficients_give_half(rng):
    X = rng.standard_normal((10_000, 4))
    cv = generate_dataset_counts(X, np.zeros(4), Multinomial(5), seed=2)
    assert abs(cv.counts.mean() / 5 - 0.5) <= 0.01


def test_bucketed_variance_matches_moments():
    rng = np.random.default_rng(8)
    n, m, a0 = 10_000, 5, 1.0
    X = rng.standard_normal((n, 2))
    beta = np.array([1.0, -0.5])
    cv = generate_dataset_counts(X, beta, DirichletMultinomial(m, a0), seed=3)
    p = 1 / (1 + np.exp(-X @ beta))
    edges = np.quantile(p, np.linspace(0, 1, 11))
    idx = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, 9)
    # within-bucket squared deviations from m p, pooled over buckets
    resid2 = (cv.counts - m * p) ** 2
    pooled = sum(resid2[idx == b].sum() for b in range(10)) / n
    expected = sum(moments(m, a0, p[idx == b])[1].sum() for b in range(10)) / n
    assert pooled == pytest.approx(expected, rel=0.10)


def test_generation_is_deterministic(rng):
    X = rng.standard_normal((300, 3))
    beta = rng.standard_normal(3)
    a = generate_dataset_counts(X, beta, DirichletMultinomial(4, 2.0), seed=11)
    b = generate_dataset_counts(X, beta, DirichletMultinomial(4, 2.0), seed=11)
    np.testing.assert_array_equal(a.counts, b.counts)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.lists(st.integers(1, 200), max_size=4))
def test_row_draws_independent_of_chunking(n, cuts):
    p = np.random.default_rng(n).uniform(size=n)
    model = DirichletMultinomial(6, 3.0)
    whole = draw_counts_rows(p, model, seed=99)
    bounds = sorted({0, n, *[c for c in cuts if c < n]})
    pieces = [draw_counts_rows(p[a:b], model, seed=99, row_offset=a)
              for a, b in zip(bounds, bounds[1:])]
    np.testing.assert_array_equal(np.concatenate(pieces), whole)


# imputation

def test_impute_empty():
    cv = impute_missing(np.zeros((0, 3)), np.ones(3), Multinomial(4), seed=0)
    assert len(cv) == 0 and cv.m == 4


def test_impute_zero_coefficients_binomial_half(rng):
    X = rng.standard_normal((20_000, 3))
    cv = impute_missing(X, np.zeros(3), Multinomial(4), seed=5)
    assert cv.imputed.all()
    freq = np.bincount(cv.counts, minlength=5) / len(cv)
    np.testing.assert_allclose(freq, stats.binom.pmf(np.arange(5), 4, 0.5), atol=0.01)


def test_impute_truth_model_rejected(rng):
    with pytest.raises(ValueError):
        impute_missing(rng.standard_normal((3, 2)), np.zeros(2), Truth(), seed=0)


def test_concat_tracks_imputed_rows():
    a = CountVector([1, 2], 3)
    b = CountVector([0], 3, imputed=[True])
    c = a.concat(b)
    np.testing.assert_array_equal(c.imputed, [False, False, True])
    with pytest.raises(ValueError):
        a.concat(CountVector([1], 2))


def test_counts_file_roundtrip(tmp_path):
    cv = CountVector([0, 3, 5, 1], 5)
    path = tmp_path / "counts.txt"
    write_counts(path, cv)
    assert path.read_text().splitlines()[0] == "m=5"
    back = read_counts(path)
    assert back.m == 5
    np.testing.assert_array_equal(back.counts, cv.counts)
