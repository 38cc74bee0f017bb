"""Moments of a Gaussian vector whose k-th coordinate is censored to ``[a, b]``.

Censoring (unlike truncation) keeps the probability mass outside the band
as point masses at the limits, so the marginal of every other coordinate
stays Gaussian. Only the censored coordinate changes mean, variance and
skewness; its covariance with coordinate ``i`` is scaled by the
probability ``P`` of landing strictly inside the band.

Scalar moments are evaluated about a shift ``c = clamp(m, a, b)``. The
formulas are shift-equivariant and evaluating them near the bulk of the
censored distribution avoids the cancellation that the raw-moment form
suffers under deep censoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateVariance, ZeroVariance
from .gaussian_core import GaussianSpec, RngHandle, cholesky_factor, std_normal_cdf, std_normal_pdf

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class CensorBand:
    """Censoring limits; either may be infinite for one-sided censoring."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        lo = -math.inf if self.lower is None else float(self.lower)
        hi = math.inf if self.upper is None else float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise ValueError(f"need lower < upper, got ({lo}, {hi})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)

    def clamp(self, y):
        return np.clip(y, self.lower, self.upper)

    def to_dict(self) -> dict:
        return {
            "lower": None if math.isinf(self.lower) else self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
        }


@dataclass(frozen=True)
class CensoredSummary:
    mean: np.ndarray
    cov: np.ndarray
    skewness: np.ndarray
    uncensored_prob: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "skewness": self.skewness.tolist(),
            "uncensored_prob": self.uncensored_prob,
        }


@dataclass(frozen=True)
class MonteCarloSummary(CensoredSummary):
    """Rep-averaged sample moments plus their standard errors across reps."""

    mean_se: np.ndarray = None
    cov_se: np.ndarray = None
    skewness_se: np.ndarray = None
    reps: int = 0

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(
            mean_se=self.mean_se.tolist(),
            cov_se=self.cov_se.tolist(),
            skewness_se=self.skewness_se.tolist(),
            reps=self.reps,
        )
        return d


class _Shifted(NamedTuple):
    shift: float
    prob: float
    m1: float
    m2: float
    m3: float


def _check_variance(s2: float) -> None:
    if not s2 >= VARIANCE_FLOOR:
        raise DegenerateVariance(f"variance {s2!r} below floor {VARIANCE_FLOOR:g}")


def _band_mass(alpha: float, beta: float) -> float:
    """P(alpha < Z < beta) without cancellation when both limits sit in one tail."""
    if alpha > 0.0:
        return std_normal_cdf(-alpha) - std_normal_cdf(-beta)
    if beta < 0.0:
        return std_normal_cdf(beta) - std_normal_cdf(alpha)
    return 1.0 - std_normal_cdf(alpha) - std_normal_cdf(-beta)


def _shifted_moments(m: float, s2: float, band: CensorBand) -> _Shifted:
    _check_variance(s2)
    a, b = band.lower, band.upper
    s = math.sqrt(s2)
    c = min(max(m, a), b)
    mu = m - c
    P = _band_mass((a - m) / s, (b - m) / s)

    # point-mass and density terms for each finite limit
    ma1 = ma2 = ma3 = 0.0
    j1 = j2 = j3 = 0.0
    if math.isfinite(a):
        al = (a - m) / s
        Fa, fa = std_normal_cdf(al), std_normal_pdf(al)
        ac = a - c
        ma1, ma2, ma3 = ac * Fa, ac * ac * Fa, ac**3 * Fa
        j1 += fa
        j2 += al * fa
        j3 += (al * al + 2.0) * fa
    if math.isfinite(b):
        be = (b - m) / s
        Gb, fb = std_normal_cdf(-be), std_normal_pdf(be)
        bc = b - c
        ma1 += bc * Gb
        ma2 += bc * bc * Gb
        ma3 += bc**3 * Gb
        j1 -= fb
        j2 -= be * fb
        j3 -= (be * be + 2.0) * fb
    # partial moments of Z over (alpha, beta): J0 = P, J1, J2 = P + j2, J3
    J2 = P + j2
    m1 = ma1 + mu * P + s * j1
    m2 = ma2 + mu * mu * P + 2.0 * mu * s * j1 + s2 * J2
    m3 = ma3 + mu**3 * P + 3.0 * mu * mu * s * j1 + 3.0 * mu * s2 * J2 + s * s2 * j3
    return _Shifted(c, P, m1, m2, m3)


def uncensored_prob(m_k: float, s2: float, band: CensorBand) -> float:
    """Probability that ``N(m_k, s2)`` falls strictly inside the band."""
    _check_variance(s2)
    s = math.sqrt(s2)
    return _band_mass((band.lower - m_k) / s, (band.upper - m_k) / s)


def censored_mean(m_k: float, s2: float, band: CensorBand) -> float:
    r = _shifted_moments(m_k, s2, band)
    return min(max(r.shift + r.m1, band.lower), band.upper)


def censored_variance(m_k: float, s2: float, band: CensorBand) -> float:
    r = _shifted_moments(m_k, s2, band)
    return max(r.m2 - r.m1 * r.m1, 0.0)


def censored_third_moment(m_k: float, s2: float, band: CensorBand) -> float:
    """Raw third moment ``E[(x^c)^3]``."""
    r = _shifted_moments(m_k, s2, band)
    c = r.shift
    return r.m3 + 3.0 * c * r.m2 + 3.0 * c * c * r.m1 + c**3


def _skewness(r: _Shifted) -> float:
    var = r.m2 - r.m1 * r.m1
    if not var > 1e-300:
        raise ZeroVariance(f"censored variance {var!r} underflowed")
    central3 = r.m3 - 3.0 * r.m1 * var - r.m1**3
    return central3 / var**1.5


def censored_skewness(m_k: float, s2: float, band: CensorBand) -> float:
    return _skewness(_shifted_moments(m_k, s2, band))


def censored_cross_cov(S_ik: float, P: float) -> float:
    return P * S_ik


def censored_mgf(spec: GaussianSpec, k: int, band: CensorBand, t) -> float:
    """Moment generating function of the vector with coordinate ``k`` censored.

    Sum of three parts: the interior (uncensored) slab, and the two point
    masses at the limits, each with the Gaussian mgf of the remaining
    coordinates evaluated at ``t`` with its k-th entry zeroed.
    """
    t = np.asarray(t, dtype=float)
    if not np.any(t):
        return 1.0
    m, S = spec.mean, spec.cov
    a, b = band.lower, band.upper
    s = math.sqrt(S[k, k])
    t0 = t.copy()
    t0[k] = 0.0
    j = float(S[k] @ t)
    j0 = float(S[k] @ t0)

    interior = math.exp(t @ m + 0.5 * t @ S @ t)
    hi = std_normal_cdf((b - m[k] - j) / s)
    lo = std_normal_cdf((a - m[k] - j) / s)
    total = interior * (hi - lo)
    base0 = t0 @ m + 0.5 * t0 @ S @ t0
    if math.isfinite(a):
        total += math.exp(t[k] * a + base0) * std_normal_cdf((a - m[k] - j0) / s)
    if math.isfinite(b):
        total += math.exp(t[k] * b + base0) * std_normal_cdf(-(b - m[k] - j0) / s)
    return float(total)


def censored_summary(spec: GaussianSpec, k: int, band: CensorBand) -> CensoredSummary:
    """Exact mean, covariance and skewness after censoring coordinate ``k``."""
    n = spec.dim
    if not 0 <= k < n:
        raise IndexError(f"coordinate {k} out of range for dimension {n}")
    r = _shifted_moments(float(spec.mean[k]), float(spec.cov[k, k]), band)
    var = max(r.m2 - r.m1 * r.m1, 0.0)

    mean = spec.mean.copy()
    cov = spec.cov.copy()
    skew = np.zeros(n)
    mean[k] = min(max(r.shift + r.m1, band.lower), band.upper)
    cross = censored_cross_cov(spec.cov[:, k], r.prob)
    cov[:, k] = cross
    cov[k, :] = cross
    cov[k, k] = var
    skew[k] = _skewness(r)
    return CensoredSummary(mean, cov, skew, float(r.prob))


def _sample_stats(x: np.ndarray):
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / (x.shape[0] - 1)
    m2 = np.mean(d * d, axis=0)
    m3 = np.mean(d * d * d, axis=0)
    return mean, cov, m3 / m2**1.5


def mc_censored_summary(
    spec: GaussianSpec,
    k: int,
    band: CensorBand,
    samples: int = 10**6,
    reps: int = 100,
    rng: RngHandle | None = None,
) -> MonteCarloSummary:
    """Sampling oracle for :func:`censored_summary`.

    Each rep draws ``samples`` vectors, clamps coordinate ``k`` and takes
    the sample mean, covariance and per-coordinate skewness; results are
    averaged over reps, with standard errors from the spread across reps.
    """
    if samples < 10**4:
        raise ValueError("need at least 1e4 samples per rep")
    if reps < 1:
        raise ValueError("reps must be positive")
    rng = rng or RngHandle(0)
    gen = rng.generator()
    L = cholesky_factor(spec.cov)
    n = spec.dim
    means = np.empty((reps, n))
    covs = np.empty((reps, n, n))
    skews = np.empty((reps, n))
    probs = np.empty(reps)
    for r in range(reps):
        x = spec.mean + gen.standard_normal((samples, n)) @ L.T
        xk = x[:, k]
        probs[r] = np.mean((xk > band.lower) & (xk < band.upper))
        np.clip(xk, band.lower, band.upper, out=xk)
        means[r], covs[r], skews[r] = _sample_stats(x)

    def se(v):
        return v.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(v.shape[1:], np.nan)

    return MonteCarloSummary(
        mean=means.mean(axis=0),
        cov=covs.mean(axis=0),
        skewness=skews.mean(axis=0),
        uncensored_prob=float(probs.mean()),
        mean_se=se(means),
        cov_se=se(covs),
        skewness_se=se(skews),
        reps=reps,
    )
