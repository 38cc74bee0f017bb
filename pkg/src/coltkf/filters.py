"""Predict/update recursions for the AKF, TKF^c and ColTKF filters.

All three share the same scalar-measurement skeleton:

* ``AKF``    augmented model, linear update with R = 0 (ignores censoring)
* ``TKFc``   original n-dim model treating u and v as white, Tobit update
* ``ColTKF`` augmented model, Tobit update with R = 0

The Tobit update replaces the latent innovation statistics by the mean,
variance and state cross-covariance of the *censored* measurement.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import special

from . import _kernel
from .censored_moments import (
    CensorBand,
    VARIANCE_FLOOR,
    censored_mean,
    censored_variance,
    uncensored_prob,
)
from .errors import DegenerateVariance, GainFloorHit
from .state_space import ArParams, ColouredStateSpace, _writable, augment

GAIN_FLOOR = _kernel.GAIN_FLOOR


class FilterKind(str, enum.Enum):
    AKF = "AKF"
    TKFc = "TKFc"
    ColTKF = "ColTKF"

    @classmethod
    def parse(cls, name) -> "FilterKind":
        if isinstance(name, cls):
            return name
        for k in cls:
            if k.value.lower() == str(name).lower():
                return k
        raise ValueError(f"unknown filter kind {name!r}; choose from {[k.value for k in cls]}")


class FilterState(NamedTuple):
    z_hat: np.ndarray
    P: np.ndarray
    skipped: bool = False


@dataclass(frozen=True)
class PredictedMeasurement:
    mean_latent: float
    var_latent: float
    mean_censored: float
    var_censored: float
    cross_cov: np.ndarray
    uncensored_prob: float


def _sym(P):
    return 0.5 * (P + P.T)


def predict(state: FilterState, A, Q) -> FilterState:
    z = A @ state.z_hat
    P = _sym(A @ state.P @ A.T + Q)
    return FilterState(z, P)


def predicted_measurement(prior: FilterState, H, R: float, band: CensorBand) -> PredictedMeasurement:
    """Censored-measurement statistics given the prior.

    Raises:
        DegenerateVariance: if ``H P H^T + R`` is below the variance floor.
    """
    ph = prior.P @ H
    mean_latent = float(H @ prior.z_hat)
    var_latent = float(H @ ph) + R
    if not var_latent >= VARIANCE_FLOOR:
        raise DegenerateVariance(f"latent measurement variance {var_latent!r}")
    prob = uncensored_prob(mean_latent, var_latent, band)
    return PredictedMeasurement(
        mean_latent=mean_latent,
        var_latent=var_latent,
        mean_censored=censored_mean(mean_latent, var_latent, band),
        var_censored=censored_variance(mean_latent, var_latent, band),
        cross_cov=ph * prob,
        uncensored_prob=prob,
    )


def tobit_update(prior: FilterState, pm: PredictedMeasurement, y: float, band: CensorBand = None, strict=False) -> FilterState:
    """Posterior from a censored observation ``y``.

    If the censored variance is below the gain floor the prior is returned
    with ``skipped=True``; pass ``strict=True`` to raise instead.
    """
    if pm.var_censored < GAIN_FLOOR:
        if strict:
            raise GainFloorHit(f"censored variance {pm.var_censored!r}")
        return FilterState(prior.z_hat, prior.P, True)
    K = pm.cross_cov / pm.var_censored
    z = prior.z_hat + K * (y - pm.mean_censored)
    P = _sym(prior.P - np.outer(K, pm.cross_cov))
    return FilterState(z, P)


def linear_update(prior: FilterState, H, R: float, y: float, strict=False) -> FilterState:
    ph = prior.P @ H
    s = float(H @ ph) + R
    if s < GAIN_FLOOR:
        if strict:
            raise GainFloorHit(f"innovation variance {s!r}")
        return FilterState(prior.z_hat, prior.P, True)
    K = ph / s
    z = prior.z_hat + K * (y - float(H @ prior.z_hat))
    P = _sym(prior.P - np.outer(K, ph))
    return FilterState(z, P)


def step_loglik(y: float, mean: float, var: float, band: CensorBand) -> float:
    """Log-likelihood factor of one observation under N(mean, var) then clamping."""
    sd = math.sqrt(var)
    if y <= band.lower:
        return float(special.log_ndtr((band.lower - mean) / sd))
    if y >= band.upper:
        return float(special.log_ndtr(-(band.upper - mean) / sd))
    r = (y - mean) / sd
    return -0.5 * r * r - math.log(sd) - 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FilterTrace:
    kind: FilterKind
    n_state: int
    prior_z: np.ndarray
    prior_P: np.ndarray
    post_z: np.ndarray
    post_P: np.ndarray
    mean_latent: np.ndarray
    var_latent: np.ndarray
    mean_censored: np.ndarray
    var_censored: np.ndarray
    uncensored_prob: np.ndarray
    cross_cov: np.ndarray
    loglik_steps: np.ndarray
    n_skipped: int = 0

    @property
    def loglik(self) -> float:
        return float(np.sum(self.loglik_steps))

    @property
    def x_hat(self) -> np.ndarray:
        """Posterior estimates of the physical state (augmented noise states dropped)."""
        return self.post_z[:, : self.n_state]

    def __len__(self):
        return self.post_z.shape[0]

    def to_csv(self, path) -> None:
        m = self.post_z.shape[1]
        with _writable(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *[f"zhat_{i + 1}" for i in range(m)], "loglik_step", "mean_censored", "var_censored", "uncensored_prob"])
            for t in range(len(self)):
                row = [*self.post_z[t], self.loglik_steps[t], self.mean_censored[t], self.var_censored[t], self.uncensored_prob[t]]
                w.writerow([t + 1, *(repr(float(v)) for v in row)])


class FilterSetup(NamedTuple):
    A: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: float
    z0: np.ndarray
    P0: np.ndarray
    tobit: bool


def filter_setup(kind, model: ColouredStateSpace, assumed_params: ArParams | None = None, tkfc_noise: str = "driver") -> FilterSetup:
    """Matrices each filter kind runs on.

    ``tkfc_noise="stationary"`` makes TKF^c use the stationary variances of
    the AR(1) noises instead of their white drivers.
    """
    kind = FilterKind.parse(kind)
    if kind is FilterKind.TKFc:
        if tkfc_noise == "driver":
            Q, R = model.Q, model.r2
        elif tkfc_noise == "stationary":
            Q, R = model.stationary_u_cov(), model.stationary_v_var()
        else:
            raise ValueError(f"tkfc_noise must be 'driver' or 'stationary', got {tkfc_noise!r}")
        return FilterSetup(model.A, np.asarray(Q), model.H, float(R), model.x0, model.P0, True)
    if assumed_params is not None:
        model = model.with_params(assumed_params)
    aug = augment(model)
    return FilterSetup(aug.A_aug, aug.Q_aug, aug.H_aug, 0.0, aug.z0, aug.P0_aug, kind is FilterKind.ColTKF)


def _check_ys(ys, band: CensorBand) -> np.ndarray:
    ys = np.ascontiguousarray(ys, dtype=float).reshape(-1)
    if not np.all(np.isfinite(ys)):
        raise ValueError("measurements must be finite")
    if np.any(ys < band.lower) or np.any(ys > band.upper):
        raise ValueError("measurements must lie within the censoring band")
    return ys


def run_filter(
    kind,
    model: ColouredStateSpace,
    ys,
    assumed_params: ArParams | None = None,
    tkfc_noise: str = "driver",
    engine: str = "compiled",
) -> FilterTrace:
    """Filter a measurement series with one of the three filters.

    ``assumed_params`` overrides (C, g) for the augmented filters; TKF^c
    ignores it. ``engine="python"`` runs the step-by-step reference
    implementation built from :func:`predict` and the update functions.
    """
    kind = FilterKind.parse(kind)
    band = model.band
    ys = _check_ys(ys, band)
    setup = filter_setup(kind, model, assumed_params, tkfc_noise)
    if engine == "python":
        return _run_python(kind, model.n, setup, band, ys)
    if engine != "compiled":
        raise ValueError(f"unknown engine {engine!r}")

    T, m = ys.shape[0], setup.z0.shape[0]
    prior_z, post_z, cross = np.empty((T, m)), np.empty((T, m)), np.empty((T, m))
    prior_P, post_P = np.empty((T, m, m)), np.empty((T, m, m))
    stats, loglik = np.empty((T, 5)), np.empty(T)
    status, skipped = _kernel.run(
        *(np.ascontiguousarray(a, dtype=float) for a in (setup.A, setup.Q, setup.H)),
        setup.R, band.lower, band.upper,
        *(np.ascontiguousarray(a, dtype=float) for a in (setup.z0, setup.P0)),
        ys, setup.tobit, prior_z, prior_P, post_z, post_P, stats, cross, loglik,
    )
    if status:
        raise DegenerateVariance(f"{kind.value}: latent measurement variance underflow at step {status}")
    return FilterTrace(
        kind, model.n, prior_z, prior_P, post_z, post_P,
        *(stats[:, i].copy() for i in range(5)), cross, loglik, int(skipped),
    )


def _run_python(kind, n, setup: FilterSetup, band, ys) -> FilterTrace:
    state = FilterState(np.array(setup.z0, dtype=float), np.array(setup.P0, dtype=float))
    rec = {k: [] for k in ("prior_z", "prior_P", "post_z", "post_P", "pm", "ll")}
    skipped = 0
    for y in ys:
        prior = predict(state, setup.A, setup.Q)
        if setup.tobit:
            pm = predicted_measurement(prior, setup.H, setup.R, band)
            state = tobit_update(prior, pm, y, band)
        else:
            pm = predicted_measurement(prior, setup.H, setup.R, CensorBand())
            state = linear_update(prior, setup.H, setup.R, y)
        skipped += state.skipped
        rec["prior_z"].append(prior.z_hat)
        rec["prior_P"].append(prior.P)
        rec["post_z"].append(state.z_hat)
        rec["post_P"].append(state.P)
        rec["pm"].append(pm)
        rec["ll"].append(step_loglik(y, pm.mean_latent, pm.var_latent, band))
    pms = rec["pm"]
    return FilterTrace(
        kind, n,
        np.array(rec["prior_z"]), np.array(rec["prior_P"]),
        np.array(rec["post_z"]), np.array(rec["post_P"]),
        np.array([p.mean_latent for p in pms]), np.array([p.var_latent for p in pms]),
        np.array([p.mean_censored for p in pms]), np.array([p.var_censored for p in pms]),
        np.array([p.uncensored_prob for p in pms]), np.array([p.cross_cov for p in pms]),
        np.array(rec["ll"]), skipped,
    )


def read_trace_csv(path) -> dict:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r])
    zcols = [i for i, h in enumerate(header) if h.startswith("zhat_")]
    return {
        "z_hat": data[:, zcols],
        **{h: data[:, i] for i, h in enumerate(header) if not h.startswith("zhat_")},
    }

