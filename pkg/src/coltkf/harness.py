"""Monte Carlo comparison of AKF, TKF^c and ColTKF on the oscillator experiments."""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .censored_moments import CensorBand
from .errors import ColTKFError, ShapeMismatch, UnknownExperiment
from .estimation import FitConfig, FitReport, fit_ar_params
from .filters import FilterKind, run_filter
from .gaussian_core import RngHandle
from .state_space import ColouredStateSpace, Trajectory, simulate

ALL_FILTERS = (FilterKind.AKF, FilterKind.TKFc, FilterKind.ColTKF)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ColouredStateSpace
    T: int = 500
    runs: int = 100
    seed: int = 0
    fit_params: bool = True
    filters: tuple = ALL_FILTERS
    experiment_id: int | None = None
    fit_config: FitConfig = field(default_factory=FitConfig)
    tkfc_noise: str = "driver"

    def __post_init__(self):
        if self.runs < 1 or self.T < 1:
            raise ValueError("runs and T must be positive")
        object.__setattr__(self, "filters", tuple(FilterKind.parse(k) for k in self.filters))


def oscillator_model(C_scale: float, g: float, band: CensorBand) -> ColouredStateSpace:
    omega = 0.005 * 2.0 * math.pi
    A = np.array([[math.cos(omega), -math.sin(omega)], [math.sin(omega), math.cos(omega)]])
    return ColouredStateSpace(
        A=A,
        C=C_scale * np.eye(2),
        H=[1.0, 0.5],
        Q=0.01**2 * np.eye(2),
        r2=1.0,
        g=g,
        band=band,
        x0=[5.0, 0.0],
        P0=1e-3 * np.eye(2),
    )


def builtin_experiment(experiment_id: int) -> ExperimentConfig:
    """The two undamped-oscillator set-ups: coloured noises (1) and white noises (2)."""
    if experiment_id == 1:
        model = oscillator_model(0.9, 0.99, CensorBand(-5.0, 5.0))
    elif experiment_id == 2:
        model = oscillator_model(0.0, 0.0, CensorBand(-1.0, 1.0))
    else:
        raise UnknownExperiment(f"no built-in experiment {experiment_id!r}; choose 1 or 2")
    return ExperimentConfig(model=model, T=500, runs=100, fit_params=True, experiment_id=experiment_id)


def rmse(estimates, truths) -> np.ndarray:
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if estimates.shape != truths.shape:
        raise ShapeMismatch(f"estimates {estimates.shape} vs truths {truths.shape}")
    if estimates.ndim == 1:
        estimates, truths = estimates[:, None], truths[:, None]
    return np.sqrt(np.mean((estimates - truths) ** 2, axis=0))


@dataclass(frozen=True)
class RmseTable:
    filters: tuple
    mean: dict
    std: dict

    @classmethod
    def from_runs(cls, per_run: dict) -> "RmseTable":
        """Aggregate ``{filter: (runs, n) array}`` into means and std devs over runs."""
        mean, std = {}, {}
        for k, v in per_run.items():
            v = np.asarray(v, dtype=float)
            mean[k] = v.mean(axis=0)
            std[k] = v.std(axis=0, ddof=1) if v.shape[0] > 1 else np.zeros(v.shape[1])
        return cls(tuple(per_run), mean, std)

    def to_dict(self) -> dict:
        return {FilterKind.parse(k).value: {"mean": self.mean[k].tolist(), "std": self.std[k].tolist()} for k in self.filters}

    def to_rows(self) -> list[list]:
        n = len(next(iter(self.mean.values())))
        header = ["filter", *[f"mean_rmse_x{i + 1}" for i in range(n)], *[f"std_rmse_x{i + 1}" for i in range(n)]]
        rows = [header]
        for k in self.filters:
            rows.append([FilterKind.parse(k).value, *(f"{v:.4f}" for v in self.mean[k]), *(f"{v:.4f}" for v in self.std[k])])
        return rows


@dataclass
class RunResult:
    run: int
    trajectory: Trajectory
    rmse: dict
    fit: FitReport | None = None
    traces: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    table: RmseTable
    runs: list
    excluded_runs: list

    def report(self) -> dict:
        cfg = self.config
        d = {
            "experiment": cfg.experiment_id,
            "runs": cfg.runs,
            "seed": cfg.seed,
            "table": self.table.to_dict(),
            "excluded_runs": self.excluded_runs,
        }
        if cfg.fit_params:
            fits = [r.fit.to_dict() for r in self.runs if r.fit is not None]
            if fits:
                d["fitted_params_median"] = {
                    "c_diag": np.median([f["c_diag"] for f in fits], axis=0).tolist(),
                    "g": float(np.median([f["g"] for f in fits])),
                }
        return d

    def write_report(self, path) -> None:
        Path(path).write_text(json.dumps(self.report(), indent=2) + "\n")


def run_single(config: ExperimentConfig, run: int, keep_traces: bool = False) -> RunResult:
    """One Monte Carlo replicate on RNG stream ``run``.

    Only ColTKF receives fitted AR(1) parameters; AKF runs with the true ones
    and TKF^c ignores colour entirely.
    """
    model = config.model
    traj = simulate(model, config.T, RngHandle(config.seed, run))
    ys = traj.observed
    fit = None
    if config.fit_params and FilterKind.ColTKF in config.filters:
        fit = fit_ar_params(model, ys, config.fit_config)
    errs, traces = {}, {}
    for kind in config.filters:
        params = fit.params if (kind is FilterKind.ColTKF and fit is not None) else None
        tr = run_filter(kind, model, ys, assumed_params=params, tkfc_noise=config.tkfc_noise)
        errs[kind] = rmse(tr.x_hat, traj.states)
        if not np.all(np.isfinite(errs[kind])):
            raise ColTKFError(f"{kind.value}: non-finite RMSE")
        if keep_traces:
            traces[kind] = tr
    return RunResult(run, traj, errs, fit, traces)


def _run_safe(args):
    config, run, keep = args
    try:
        return run_single(config, run, keep)
    except (ColTKFError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return exc


def run_experiment(config: ExperimentConfig, dump_dir=None, workers: int = 1) -> ExperimentResult:
    """Run every Monte Carlo replicate and aggregate RMSEs.

    Runs that fail are excluded with a warning naming their seed and
    stream. Results are joined by run index so the table does not depend
    on completion order.
    """
    keep = dump_dir is not None
    jobs = [(config, r, keep) for r in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_safe, jobs))
    else:
        outcomes = [_run_safe(j) for j in jobs]

    results, excluded = [], []
    for r, out in enumerate(outcomes):
        if isinstance(out, Exception):
            msg = f"run {r} (seed={config.seed}, stream={r}) excluded: {out}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            excluded.append({"run": r, "seed": config.seed, "stream": r, "error": str(out)})
        else:
            results.append(out)
    if not results:
        raise ColTKFError("every Monte Carlo run failed")
    per_run = {k: np.array([res.rmse[k] for res in results]) for k in config.filters}
    table = RmseTable.from_runs(per_run)
    result = ExperimentResult(config, table, results, excluded)
    if dump_dir is not None:
        dump_runs(result, dump_dir)
    return result


def dump_runs(result: ExperimentResult, directory) -> None:
    """Per-run trajectory, filter traces, fit and a figure-ready estimates CSV."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for res in result.runs:
        stem = f"run{res.run:03d}"
        res.trajectory.to_csv(out / f"{stem}_trajectory.csv")
        for kind, tr in res.traces.items():
            tr.to_csv(out / f"{stem}_trace_{kind.value.lower()}.csv")
        if res.fit is not None:
            res.fit.to_json(out / f"{stem}_fit.json")
        write_estimates_csv(out / f"{stem}_estimates.csv", res)


def write_estimates_csv(path, res: RunResult) -> None:
    traj = res.trajectory
    n = traj.states.shape[1]
    kinds = list(res.traces)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["t", *[f"x{i + 1}" for i in range(n)], "y_star", "y"]
            + [f"{k.value.lower()}_x{i + 1}" for k in kinds for i in range(n)]
        )
        for t in range(traj.T):
            est = [repr(float(v)) for k in kinds for v in res.traces[k].x_hat[t]]
            w.writerow([t + 1, *(repr(float(v)) for v in traj.states[t]), repr(float(traj.latent[t])), repr(float(traj.observed[t])), *est])


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
