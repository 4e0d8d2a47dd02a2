import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, stats

from splitgauge.errors import DimensionMismatchError, InsufficientSamplesError, NotPSDError, ValidationError
from splitgauge.gaussian import GaussianSummary, frechet, frechet_features, sqrt_psd, summarize


def random_psd(rng, d, rank=None):
    a = rng.normal(size=(rank or d, d))
    return a.T @ a / d


def random_summary(rng, d):
    return GaussianSummary(rng.normal(size=d), random_psd(rng, d), 100)


def scipy_frechet(g1, g2):
    """Independent oracle: scipy's general (non-symmetric) matrix square root."""
    covmean = linalg.sqrtm(g1.cov @ g2.cov)
    diff = g1.mean - g2.mean
    return float(diff @ diff + np.trace(g1.cov) + np.trace(g2.cov) - 2 * np.trace(covmean).real)


def test_summarize_examples():
    g = summarize(np.array([[1.0, 2.0]] * 3))
    assert np.array_equal(g.mean, [1, 2]) and np.array_equal(g.cov, np.zeros((2, 2)))
    g = summarize(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.array_equal(g.mean, [1, 0])
    assert np.array_equal(g.cov, [[2, 0], [0, 0]])
    assert g.sample_count == 2


def test_summarize_matches_numpy(rng):
    x = rng.normal(size=(100, 5))
    g = summarize(x)
    assert np.allclose(g.cov, np.cov(x, rowvar=False), rtol=1e-12, atol=1e-14)
    assert np.array_equal(g.cov, g.cov.T)
    assert np.linalg.eigvalsh(g.cov).min() >= -1e-8 * max(1.0, np.trace(g.cov) / 5)


def test_summarize_needs_two_rows():
    with pytest.raises(InsufficientSamplesError):
        summarize(np.ones((1, 3)))


def test_summary_rejects_asymmetric():
    with pytest.raises(ValidationError):
        GaussianSummary(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]], 2)
    with pytest.raises(DimensionMismatchError):
        GaussianSummary(np.zeros(3), np.eye(2), 2)


def test_sqrt_psd_examples(rng):
    assert np.allclose(sqrt_psd(np.eye(4)), np.eye(4), atol=1e-15)
    assert np.allclose(sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    a = rng.normal(size=(6, 6))
    s = a.T @ a
    r = sqrt_psd(s)
    assert np.linalg.norm(r @ r - s) <= 1e-8 * max(1.0, np.linalg.norm(s))
    assert np.allclose(r, linalg.sqrtm(s).real, atol=1e-9)
    assert np.linalg.eigvalsh(r).min() > -1e-12


def test_sqrt_psd_rank_deficient(rng):
    s = random_psd(rng, 10, rank=3)
    r = sqrt_psd(s)
    assert np.linalg.norm(r @ r - s) <= 1e-8 * max(1.0, np.linalg.norm(s))


def test_sqrt_psd_errors():
    with pytest.raises(NotPSDError):
        sqrt_psd(np.diag([1.0, -0.5]))
    with pytest.raises(ValidationError):
        sqrt_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))
    # tiny negative eigenvalues from round-off are clamped, not rejected
    r = sqrt_psd(np.diag([1.0, -1e-9]))
    assert r[1, 1] == 0.0


def test_frechet_examples():
    a = GaussianSummary([0.0], [[1.0]], 10)
    b = GaussianSummary([3.0], [[4.0]], 10)
    assert abs(frechet(a, b) - 10.0) < 1e-12
    assert frechet(a, a) == 0.0


def test_frechet_commuting_diagonal(rng):
    m1, m2 = rng.normal(size=3), rng.normal(size=3)
    v1, v2 = rng.uniform(0.1, 3, 3), rng.uniform(0.1, 3, 3)
    expected = np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(v1) - np.sqrt(v2)) ** 2)
    got = frechet(GaussianSummary(m1, np.diag(v1), 5), GaussianSummary(m2, np.diag(v2), 5))
    assert abs(got - expected) < 1e-9


def test_frechet_matches_scipy_oracle(rng):
    for d in (2, 5, 16):
        g1, g2 = random_summary(rng, d), random_summary(rng, d)
        assert abs(frechet(g1, g2) - scipy_frechet(g1, g2)) < 1e-7 * max(1.0, scipy_frechet(g1, g2))


def test_frechet_gaussian_w2_oracle(rng):
    # W2^2 between N(0, I) and N(0, c^2 I) is d (1 - c)^2
    d, c = 7, 2.5
    g1 = GaussianSummary(np.zeros(d), np.eye(d), 2)
    g2 = GaussianSummary(np.zeros(d), c * c * np.eye(d), 2)
    assert abs(frechet(g1, g2) - d * (1 - c) ** 2) < 1e-12


def test_frechet_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        frechet(GaussianSummary([0.0], [[1.0]], 2), GaussianSummary([0.0, 0.0], np.eye(2), 2))


def test_frechet_jitter_handles_singular(rng):
    x = rng.normal(size=(5, 20))  # n < d: singular covariances
    y = rng.normal(size=(5, 20))
    assert frechet_features(x, y, jitter=1e-6) > 0


def test_translation_covariance(rng):
    g1, g2 = random_summary(rng, 4), random_summary(rng, 4)
    t = rng.normal(size=4)
    both = frechet(GaussianSummary(g1.mean + t, g1.cov, 2), GaussianSummary(g2.mean + t, g2.cov, 2))
    assert abs(both - frechet(g1, g2)) < 1e-9
    shifted = frechet(GaussianSummary(g1.mean + t, g1.cov, 2), g1)
    assert abs(shifted - t @ t) < 1e-9


@st.composite
def summary_pairs(draw):
    d = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_summary(rng, d), random_summary(rng, d)


@settings(max_examples=80, deadline=None)
@given(summary_pairs())
def test_frechet_symmetric_nonnegative(pair):
    a, b = pair
    ab, ba = frechet(a, b), frechet(b, a)
    assert ab >= 0 and ba >= 0
    assert abs(ab - ba) <= 1e-6 * max(1.0, ab)
    assert frechet(a, a) < 1e-9


@settings(max_examples=40, deadline=None)
@given(summary_pairs(), st.integers(0, 2**32 - 1))
def test_frechet_rotation_invariant(pair, seed):
    a, b = pair
    q = stats.special_ortho_group.rvs(a.dim, random_state=seed) if a.dim > 1 else np.array([[1.0]])
    rot = lambda g: GaussianSummary(q @ g.mean, q @ g.cov @ q.T, 2)  # noqa: E731
    base = frechet(a, b)
    assert abs(frechet(rot(a), rot(b)) - base) <= 1e-6 * max(1.0, base)
