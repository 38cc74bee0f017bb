"""Censored-measurement likelihood and AR(1) parameter fitting.

Each candidate (c_diag, g) gets a full ColTKF pass; the likelihood
factor of step t uses the latent predictive N(H_aug z_t^-, H_aug P_t^- H_aug^T):
a density where the observation lies inside the band and a tail mass
where it sits on a limit.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import _kernel
from .errors import DegenerateVariance, NonFinite
from .filters import FilterKind, _check_ys, filter_setup, run_filter
from .state_space import ArParams, ColouredStateSpace

log = logging.getLogger(__name__)

MIN_SERIES_LENGTH = 50


def censored_log_likelihood(params: ArParams, model: ColouredStateSpace, ys, engine: str = "compiled") -> float:
    """Log-likelihood of the censored series ``ys`` under AR(1) ``params``.

    Raises:
        DegenerateVariance: if the latent predictive variance underflows.
    """
    ys = _check_ys(ys, model.band)
    if engine == "python":
        return run_filter(FilterKind.ColTKF, model, ys, params, engine="python").loglik
    s = filter_setup(FilterKind.ColTKF, model, params)
    ll = _kernel.loglik_only(
        *(np.ascontiguousarray(a, dtype=float) for a in (s.A, s.Q, s.H)),
        s.R, model.band.lower, model.band.upper,
        *(np.ascontiguousarray(a, dtype=float) for a in (s.z0, s.P0)),
        ys,
    )
    if ll == -np.inf:
        raise DegenerateVariance("latent measurement variance underflow")
    return float(ll)


def likelihood_counts(ys, band) -> dict:
    """How many density / lower-mass / upper-mass factors the likelihood has."""
    ys = np.asarray(ys)
    lower = int(np.sum(ys <= band.lower))
    upper = int(np.sum(ys >= band.upper))
    return {"density": ys.size - lower - upper, "lower": lower, "upper": upper}


def to_theta(params: ArParams) -> np.ndarray:
    return np.arctanh(np.append(params.c_diag, params.g))


def from_theta(theta) -> ArParams:
    p = np.tanh(np.asarray(theta, dtype=float))
    return ArParams(p[:-1], p[-1])


@dataclass(frozen=True)
class FitConfig:
    starts: tuple = (0.0, 0.5, 0.9)
    max_iter: int = 500
    simplex_step: float = 0.5
    xatol: float = 2.5e-7
    fatol: float = 1e-8
    tolerance: float = 1e-6  # simplex diameter in theta-space counted as converged

    def with_restarts(self, n: int) -> "FitConfig":
        """Use ``n`` starting points spread over [0, 0.9]."""
        if n < 1:
            raise ValueError("need at least one restart")
        starts = (0.0,) if n == 1 else tuple(float(v) for v in np.linspace(0.0, 0.9, n))
        return FitConfig(starts, self.max_iter, self.simplex_step, self.xatol, self.fatol, self.tolerance)


@dataclass(frozen=True)
class FitReport:
    params: ArParams
    log_likelihood: float
    iterations: int
    converged: bool
    restarts_used: int
    start_log_likelihoods: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "c_diag": self.params.c_diag.tolist(),
            "g": self.params.g,
            "loglik": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def read_params_json(path) -> ArParams:
    d = json.loads(Path(path).read_text())
    return ArParams(d["c_diag"], d["g"])


def _diameter(simplex: np.ndarray) -> float:
    d = simplex[:, None, :] - simplex[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def fit_ar_params(model: ColouredStateSpace, ys, config: FitConfig | None = None) -> FitReport:
    """Maximize the censored likelihood over diagonal C and g.

    Nelder-Mead runs in theta = arctanh(param) so the search is
    unconstrained; each start point sets every coefficient to the same
    value. The best restart wins.

    Raises:
        NonFinite: if no restart reaches a finite likelihood.
    """
    config = config or FitConfig()
    ys = _check_ys(ys, model.band)
    if ys.size < MIN_SERIES_LENGTH:
        warnings.warn(f"only {ys.size} measurements; AR(1) fits below {MIN_SERIES_LENGTH} are unreliable", stacklevel=2)
    n = model.n

    def negll(theta):
        p = np.tanh(theta)
        if np.any(np.abs(p) >= 1.0):
            return np.inf
        try:
            ll = censored_log_likelihood(ArParams(p[:-1], p[-1]), model, ys)
        except DegenerateVariance:
            return np.inf
        return -ll if math.isfinite(ll) else np.inf

    best = None
    iterations = 0
    start_ll = []
    for start in config.starts:
        theta0 = np.full(n + 1, math.atanh(start))
        f0 = negll(theta0)
        start_ll.append(-f0)
        simplex = np.vstack([theta0, theta0 + config.simplex_step * np.eye(n + 1)])
        res = optimize.minimize(
            negll,
            theta0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxiter": config.max_iter,
                "xatol": config.xatol,
                "fatol": config.fatol,
            },
        )
        iterations += int(res.nit)
        converged = _diameter(res.final_simplex[0]) < config.tolerance
        log.debug("start %.2f: -loglik %.6f after %d iterations (converged=%s)", start, res.fun, res.nit, converged)
        if math.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x, converged)
    if best is None:
        raise NonFinite("every restart produced a non-finite likelihood")
    fun, theta, converged = best
    params = from_theta(theta)
    return FitReport(
        params=params,
        log_likelihood=censored_log_likelihood(params, model, ys),
        iterations=iterations,
        converged=converged,
        restarts_used=len(config.starts),
        start_log_likelihoods=tuple(start_ll),
    )
