"""Scalar normal density/CDF, jittered Cholesky and seeded MVN sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NotPositiveSemiDefinite

SYMMETRY_ATOL = 1e-12
JITTER_STEPS = (0.0, 1e-12, 1e-10, 1e-8)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector and covariance matrix of a multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (n, n):
            raise ValueError(f"mean of length {n} needs an {n}x{n} covariance, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_ATOL):
            raise ValueError("covariance is not symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class RngHandle:
    """Reproducible random stream identified by ``(seed, stream)``.

    Streams are independent Philox (counter-based) generators keyed from
    a SeedSequence spawn key, so run ``r`` of an experiment can be
    regenerated without replaying runs ``0..r-1``.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, stream: int) -> "RngHandle":
        return RngHandle(self.seed, stream)


def std_normal_pdf(x):
    """exp(-x^2/2)/sqrt(2*pi); works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    ``ndtr`` switches to ``erfc`` in the tails, so small lower-tail
    probabilities keep full relative precision. Infinite arguments give
    exactly 0 or 1.
    """
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def std_normal_logcdf(x):
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def cholesky_factor(S) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == S``, tolerating semidefinite input.

    On failure the factorization is retried with ``delta * max(diag(S))``
    added to the diagonal for each ``delta`` in (1e-12, 1e-10, 1e-8).
    An all-zero matrix factors to zeros.

    Raises:
        NotPositiveSemiDefinite: if every jitter level fails.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got {S.shape}")
    if not np.allclose(S, S.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise NotPositiveSemiDefinite("matrix is not symmetric")
    scale = float(np.max(np.diag(S))) if S.size else 0.0
    if scale == 0.0 and not np.any(S):
        return np.zeros_like(S)
    if scale <= 0.0:
        raise NotPositiveSemiDefinite("non-positive diagonal")
    eye = np.eye(S.shape[0])
    for delta in JITTER_STEPS:
        try:
            return np.linalg.cholesky(S + delta * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveSemiDefinite(f"factorization failed after jitter up to {JITTER_STEPS[-1]:g}")


def sample_mvn(spec: GaussianSpec, rng: RngHandle | np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` rows from ``N(spec.mean, spec.cov)`` as a (count, n) array."""
    if count < 1:
        raise ValueError("count must be positive")
    gen = rng.generator() if isinstance(rng, RngHandle) else rng
    L = cholesky_factor(spec.cov)
    z = gen.standard_normal((count, spec.dim))
    return spec.mean + z @ L.T
