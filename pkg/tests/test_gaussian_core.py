import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from coltkf.errors import NotPositiveSemiDefinite
from coltkf.gaussian_core import (
    GaussianSpec,
    RngHandle,
    cholesky_factor,
    sample_mvn,
    std_normal_cdf,
    std_normal_pdf,
)


def _pdf_quad(x):
    return quad(lambda u: math.exp(-u * u / 2) / math.sqrt(2 * math.pi), -math.inf, x, epsabs=1e-13, epsrel=1e-13)[0]


def test_pdf_values():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert std_normal_pdf(40.0) < 1e-300
    # exp(-1/2)/sqrt(2 pi) to 30 digits with mpmath: 0.241970724519143...
    assert std_normal_pdf(1.0) == pytest.approx(0.2419707245, abs=1e-10)


@pytest.mark.parametrize("x, expected", [(0.0, 0.5), (0.7071068, 0.7602499), (-0.3535534, 0.3618368)])
def test_cdf_values(x, expected):
    assert std_normal_cdf(x) == pytest.approx(expected, abs=1e-7)
    assert std_normal_cdf(x) == pytest.approx(_pdf_quad(x), abs=1e-12)


def test_cdf_limits():
    assert std_normal_cdf(-math.inf) == 0.0
    assert std_normal_cdf(math.inf) == 1.0


def test_cdf_accuracy_against_quadrature_grid():
    for x in np.linspace(-8, 8, 33):
        assert abs(std_normal_cdf(x) - _pdf_quad(x)) <= 1e-12


@given(st.floats(-30, 30, allow_nan=False))
def test_cdf_symmetry(x):
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_cdf_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    assert std_normal_cdf(lo) <= std_normal_cdf(hi)


def test_cdf_derivative_is_pdf():
    h = 1e-6
    for x in np.linspace(-8, 8, 161):
        fd = (std_normal_cdf(x + h) - std_normal_cdf(x - h)) / (2 * h)
        assert abs(fd - std_normal_pdf(x)) <= 1e-6


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky_factor(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(cholesky_factor([[4.0, 2.0], [2.0, 5.0]]), [[2.0, 0.0], [1.0, 2.0]], atol=1e-14)


def test_cholesky_rank_deficient_uses_jitter():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = cholesky_factor(S)
    assert np.max(np.abs(L @ L.T - S)) <= 1e-6


def test_cholesky_zero_matrix():
    np.testing.assert_array_equal(cholesky_factor(np.zeros((3, 3))), np.zeros((3, 3)))


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveSemiDefinite):
        cholesky_factor([[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cholesky_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    S = M @ M.T + 1e-3 * np.eye(n)
    L = cholesky_factor(S)
    assert np.allclose(L, np.tril(L))
    assert np.max(np.abs(L @ L.T - S)) <= 1e-9 * np.max(np.abs(S))


def test_spec_rejects_asymmetric():
    with pytest.raises(ValueError):
        GaussianSpec([0, 0], [[1, 0.5], [0.4, 1]])


def test_sample_standard_normal():
    x = sample_mvn(GaussianSpec([0.0], [[1.0]]), RngHandle(11), 10**6)
    assert x.shape == (10**6, 1)
    assert abs(x.mean()) < 0.004


def test_sample_example_gaussian(example_spec):
    x = sample_mvn(example_spec, RngHandle(5), 10**6)
    assert np.all(np.abs(x.mean(axis=0) - 1.0) < 0.01)
    se = np.sqrt(np.diag(example_spec.cov) / 10**6)
    assert np.all(np.abs(x.mean(axis=0) - 1.0) < 4 * se)


def test_sample_small_variance():
    x = sample_mvn(GaussianSpec([5.0, 0.0], 1e-3 * np.eye(2)), RngHandle(2), 10**4)
    assert np.all(np.abs(x.mean(axis=0) - [5.0, 0.0]) < 0.002)


def test_sample_covariance_within_standard_errors():
    spec = GaussianSpec([0.0, 1.0], [[2.0, 0.6], [0.6, 1.0]])
    N = 10**6
    x = sample_mvn(spec, RngHandle(9), N)
    C = np.cov(x.T)
    S = spec.cov
    # Var of a sample covariance entry: (S_ii S_jj + S_ij^2) / N
    se = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / N)
    assert np.all(np.abs(C - S) < 4 * se)


def test_sampling_is_deterministic():
    spec = GaussianSpec([0.0, 1.0], [[2.0, 0.6], [0.6, 1.0]])
    a = sample_mvn(spec, RngHandle(3, 7), 1000)
    b = sample_mvn(spec, RngHandle(3, 7), 1000)
    c = sample_mvn(spec, RngHandle(3, 8), 1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
