"""Command line entry point: ``coltkf <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .censored_moments import CensorBand, censored_summary, mc_censored_summary
from .errors import ColTKFError, ModelError, UnknownExperiment
from .estimation import FitConfig, fit_ar_params, read_params_json
from .filters import FilterKind, run_filter
from .gaussian_core import GaussianSpec, RngHandle
from .harness import builtin_experiment, rmse, run_experiment, with_overrides
from .state_space import ColouredStateSpace, read_trajectory_csv, simulate

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def load_model(path) -> ColouredStateSpace:
    d = _load_json(path)
    try:
        return ColouredStateSpace.from_dict(d)
    except KeyError as exc:
        raise UsageError(f"{path}: missing model key {exc}") from exc


def load_gaussian(path) -> tuple[GaussianSpec, CensorBand | None]:
    """A Gaussian from ``mean``/``cov`` keys, or from ``x0``/``P0`` of a model file."""
    d = _load_json(path)
    if "mean" in d and "cov" in d:
        spec = GaussianSpec(d["mean"], d["cov"])
    elif "x0" in d and "P0" in d:
        spec = GaussianSpec(d["x0"], d["P0"])
    else:
        raise UsageError(f"{path}: expected 'mean'/'cov' (or model 'x0'/'P0') keys")
    band = d.get("band")
    return spec, (CensorBand(band.get("lower"), band.get("upper")) if band else None)


def _write_csv(rows, out=None):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    finally:
        if out:
            fh.close()


def cmd_moments(args):
    spec, file_band = load_gaussian(args.model)
    lower = args.lower if args.lower is not None else (file_band.lower if file_band else -math.inf)
    upper = args.upper if args.upper is not None else (file_band.upper if file_band else math.inf)
    band = CensorBand(lower, upper)
    k = args.k - 1
    if not 0 <= k < spec.dim:
        raise UsageError(f"--k must be between 1 and {spec.dim}")
    out = {"k": args.k, "band": band.to_dict(), "closed_form": censored_summary(spec, k, band).to_dict()}
    if args.mc:
        mc = mc_censored_summary(spec, k, band, samples=args.mc, reps=args.reps, rng=RngHandle(args.seed))
        out["monte_carlo"] = mc.to_dict()
    print(json.dumps(out, indent=2))


def cmd_simulate(args):
    if (args.experiment is None) == (args.model is None):
        raise UsageError("give exactly one of --experiment or --model")
    if args.experiment is not None:
        cfg = builtin_experiment(args.experiment)
        model, steps = cfg.model, args.steps or cfg.T
    else:
        model, steps = load_model(args.model), args.steps or 500
    traj = simulate(model, steps, RngHandle(args.seed, args.stream))
    if args.out:
        traj.to_csv(args.out)
        frac = float(np.mean((traj.observed <= model.band.lower) | (traj.observed >= model.band.upper)))
        print(json.dumps({"steps": steps, "censored_fraction": frac, "out": str(args.out)}))
    else:
        traj.to_csv(sys.stdout)


def cmd_filter(args):
    model = load_model(args.model)
    data = read_trajectory_csv(args.data)
    params = read_params_json(args.params) if args.params else None
    kind = FilterKind.parse(args.kind)
    trace = run_filter(kind, model, data["y"], assumed_params=params, tkfc_noise=args.tkfc_noise)
    summary = {"kind": kind.value, "steps": len(trace), "loglik": trace.loglik, "skipped_updates": trace.n_skipped}
    if data["states"].shape == trace.x_hat.shape:
        summary["rmse"] = rmse(trace.x_hat, data["states"]).tolist()
    if args.out:
        trace.to_csv(args.out)
        print(json.dumps(summary))
    else:
        trace.to_csv(sys.stdout)


def cmd_fit(args):
    model = load_model(args.model)
    data = read_trajectory_csv(args.data)
    config = FitConfig()
    if args.restarts is not None:
        config = config.with_restarts(args.restarts)
    if args.max_iter is not None:
        config = FitConfig(config.starts, args.max_iter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = fit_ar_params(model, data["y"], config)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    text = report.to_json(args.out)
    print(text)


def cmd_experiment(args):
    try:
        cfg = builtin_experiment(args.id)
    except UnknownExperiment as exc:
        raise UsageError(str(exc)) from exc
    cfg = with_overrides(cfg, runs=args.runs, seed=args.seed, T=args.steps, tkfc_noise=args.tkfc_noise)
    if args.no_fit:
        cfg = with_overrides(cfg, fit_params=False)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_experiment(cfg, dump_dir=args.dump, workers=args.workers)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write_csv(result.table.to_rows())
    if args.report:
        result.write_report(args.report)


def cmd_model(args):
    print(json.dumps(builtin_experiment(args.experiment).model.to_dict(), indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coltkf", description="Coloured Tobit Kalman filtering toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("moments", help="censored mean/covariance/skewness of a Gaussian")
    s.add_argument("--model", required=True, help="JSON with mean/cov (or a model file's x0/P0)")
    s.add_argument("--k", type=int, required=True, help="censored coordinate, 1-based")
    s.add_argument("--lower", type=float, default=None)
    s.add_argument("--upper", type=float, default=None)
    s.add_argument("--mc", type=int, default=0, metavar="SAMPLES", help="add a Monte Carlo comparison")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("simulate", help="simulate a censored trajectory")
    s.add_argument("--experiment", type=int, choices=(1, 2))
    s.add_argument("--model")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("filter", help="run AKF, TKF^c or ColTKF on a trajectory CSV")
    s.add_argument("--kind", required=True, type=str.lower, choices=("akf", "tkfc", "coltkf"))
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--params", help="fit JSON with c_diag and g")
    s.add_argument("--tkfc-noise", choices=("driver", "stationary"), default="driver")
    s.add_argument("--out")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("fit", help="fit AR(1) parameters by censored maximum likelihood")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--restarts", type=int)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("experiment", help="Monte Carlo comparison on a built-in experiment")
    s.add_argument("--id", type=int, required=True)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--no-fit", action="store_true", help="give ColTKF the true AR(1) parameters")
    s.add_argument("--tkfc-noise", choices=("driver", "stationary"))
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--dump", help="directory for per-run CSV/JSON artifacts")
    s.add_argument("--report", help="write the JSON report here")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("model", help="print a built-in experiment's model JSON")
    s.add_argument("--experiment", type=int, required=True, choices=(1, 2))
    s.set_defaults(func=cmd_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ModelError) as exc:
        print(f"coltkf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ColTKFError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"coltkf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"coltkf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
