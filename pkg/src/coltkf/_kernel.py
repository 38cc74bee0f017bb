"""Compiled filter loop.

Mirrors ``filters.predict`` / ``predicted_measurement`` / ``tobit_update``
step for step; the Python versions remain the reference and the test
suite checks the two paths against each other.
"""

import math

import numpy as np
from numba import njit

VAR_FLOOR = 1e-12
GAIN_FLOOR = 1e-12
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# columns of the per-step measurement statistics array
MEAN_LATENT, VAR_LATENT, MEAN_CENSORED, VAR_CENSORED, PROB = range(5)


@njit(cache=True)
def _cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def _pdf(x):
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@njit(cache=True)
def log_cdf(x):
    if x >= -20.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # asymptotic series; the truncation error is below 3e-12 relative here
    x2 = x * x
    inv = 1.0 / x2
    series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv * (1.0 - 9.0 * inv))))
    return -0.5 * x2 - math.log(-x) - _LOG_SQRT_2PI + math.log(series)


@njit(cache=True)
def _band_mass(al, be):
    if al > 0.0:
        return _cdf(-al) - _cdf(-be)
    if be < 0.0:
        return _cdf(be) - _cdf(al)
    return 1.0 - _cdf(al) - _cdf(-be)


@njit(cache=True)
def censored_mean_var(m, s2, a, b):
    """(P, mean, variance) of clamp(N(m, s2), a, b)."""
    s = math.sqrt(s2)
    c = min(max(m, a), b)
    mu = m - c
    P = _band_mass((a - m) / s, (b - m) / s)
    ma1 = 0.0
    ma2 = 0.0
    j1 = 0.0
    j2 = 0.0
    if math.isfinite(a):
        al = (a - m) / s
        Fa = _cdf(al)
        fa = _pdf(al)
        ac = a - c
        ma1 += ac * Fa
        ma2 += ac * ac * Fa
        j1 += fa
        j2 += al * fa
    if math.isfinite(b):
        be = (b - m) / s
        Gb = _cdf(-be)
        fb = _pdf(be)
        bc = b - c
        ma1 += bc * Gb
        ma2 += bc * bc * Gb
        j1 -= fb
        j2 -= be * fb
    m1 = ma1 + mu * P + s * j1
    m2 = ma2 + mu * mu * P + 2.0 * mu * s * j1 + s2 * (P + j2)
    mean = min(max(c + m1, a), b)
    var = max(m2 - m1 * m1, 0.0)
    return P, mean, var


@njit(cache=True)
def step_loglik(y, mean, var, a, b):
    sd = math.sqrt(var)
    if y <= a:
        return log_cdf((a - mean) / sd)
    if y >= b:
        return log_cdf(-(b - mean) / sd)
    r = (y - mean) / sd
    return -0.5 * r * r - math.log(sd) - _LOG_SQRT_2PI


@njit(cache=True)
def run(A, Q, H, R, a, b, z0, P0, ys, tobit, prior_z, prior_P, post_z, post_P, stats, cross, loglik):
    """Filter ``ys`` in place into the output arrays.

    Returns (status, n_skipped); status is 0 on success or the 1-based
    step at which the latent variance fell below the floor.
    """
    m = z0.shape[0]
    T = ys.shape[0]
    z = z0.copy()
    P = P0.copy()
    ph = np.empty(m)
    skipped = 0
    for t in range(T):
        z = A @ z
        P = A @ P @ A.T + Q
        P = 0.5 * (P + P.T)
        prior_z[t] = z
        prior_P[t] = P

        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += P[i, j] * H[j]
            ph[i] = acc
        mean_latent = 0.0
        var_latent = R
        for i in range(m):
            mean_latent += H[i] * z[i]
            var_latent += H[i] * ph[i]
        if not var_latent >= VAR_FLOOR:
            return t + 1, skipped

        y = ys[t]
        if tobit:
            prob, mean_c, var_c = censored_mean_var(mean_latent, var_latent, a, b)
        else:
            prob, mean_c, var_c = 1.0, mean_latent, var_latent
        stats[t, MEAN_LATENT] = mean_latent
        stats[t, VAR_LATENT] = var_latent
        stats[t, MEAN_CENSORED] = mean_c
        stats[t, VAR_CENSORED] = var_c
        stats[t, PROB] = prob
        for i in range(m):
            cross[t, i] = ph[i] * prob
        loglik[t] = step_loglik(y, mean_latent, var_latent, a, b)

        if var_c < GAIN_FLOOR:
            skipped += 1
        else:
            innov = (y - mean_c) / var_c
            z = z + cross[t] * innov
            P = P - np.outer(cross[t], cross[t]) / var_c
            P = 0.5 * (P + P.T)
        post_z[t] = z
        post_P[t] = P
    return 0, skipped


@njit(cache=True)
def loglik_only(A, Q, H, R, a, b, z0, P0, ys):
    """Total censored log-likelihood of a Tobit pass; -inf on variance underflow."""
    m = z0.shape[0]
    T = ys.shape[0]
    z = z0.copy()
    P = P0.copy()
    ph = np.empty(m)
    total = 0.0
    for t in range(T):
        z = A @ z
        P = A @ P @ A.T + Q
        P = 0.5 * (P + P.T)
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += P[i, j] * H[j]
            ph[i] = acc
        mean_latent = 0.0
        var_latent = R
        for i in range(m):
            mean_latent += H[i] * z[i]
            var_latent += H[i] * ph[i]
        if not var_latent >= VAR_FLOOR:
            return -np.inf
        y = ys[t]
        total += step_loglik(y, mean_latent, var_latent, a, b)
        prob, mean_c, var_c = censored_mean_var(mean_latent, var_latent, a, b)
        if var_c >= GAIN_FLOOR:
            innov = (y - mean_c) / var_c
            for i in range(m):
                z[i] += ph[i] * prob * innov
            scale = prob * prob / var_c
            for i in range(m):
                for j in range(m):
                    P[i, j] -= scale * ph[i] * ph[j]
            P = 0.5 * (P + P.T)
    return total
