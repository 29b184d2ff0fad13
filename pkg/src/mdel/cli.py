"""Command-line front end: ``mdel estimate``, ``mdel simulate``, ``mdel figures``.

Every subcommand writes plain CSV files into ``--out`` and appends one JSON
object per invocation to ``manifest.jsonl`` there. Result files depend only on
the arguments and the seed; timing and version details go to the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import DatasetError, TrialDataset, validate_dataset
from .pipeline import MODEL_NAMES, default_estimators, parse_estimator, run_estimators
from .screening import sis_screen
from .simulation import RepRecord, SimulationSpec, aggregate, monte_carlo_run, true_theta

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

RESULT_COLUMNS = ("method", "model", "estimate", "se", "ci95_lo", "ci95_hi",
                  "ci99_lo", "ci99_hi", "n", "p", "k", "seed", "warnings")
RAW_COLUMNS = ("rep", "estimator", "model", "estimate", "se", "covered95", "covered99", "error")
METRIC_COLUMNS = ("estimator", "model", "Bias", "SD", "SE", "RMSE", "Cov95", "Cov99",
                  "theta", "reps", "failures", "warnings")
FIGURE_COLUMNS = ("n", "estimator", "mean_sq_ci_len_95", "mean_sq_ci_len_99", "cov95", "cov99")
FIGURE_ESTIMATORS = ("dim", "nosplit_el:lasso", "mdel:lasso")
FIGURE_RHO = {"figure1": 0.0, "figure2": 0.5}


class UsageError(Exception):
    pass


def fmt(v) -> str:
    """Exact text for floats (repr round-trips); plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _manifest(out: Path, command: str, args: argparse.Namespace, started: float, **extra) -> None:
    entry = {
        "command": command,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": round(time.time() - started, 3),
        **extra,
    }
    with open(out / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def parse_models(text: str) -> tuple[tuple[str, ...], bool]:
    """``lasso,scad,multi`` -> (("lasso", "scad"), True)."""
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise UsageError("--models is empty")
    bad = [t for t in names if t not in MODEL_NAMES + ("multi",)]
    if bad:
        raise UsageError(f"unknown model(s): {', '.join(bad)}")
    singles = tuple(dict.fromkeys(t for t in names if t != "multi"))
    multi = "multi" in names
    if multi and not singles:
        raise UsageError("multi needs at least one single model to combine")
    return singles, multi


def parse_grid(text: str) -> list[int]:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (int(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected start:stop:step") from None


# ----------------------------------------------------------------- data input


def read_trial_csv(path: str | Path, outcome: str, treatment: str) -> tuple[TrialDataset, list[str]]:
    """Load a trial from a headed CSV; every other column is a covariate.

    Raises :class:`DatasetError` naming the offending line for ragged rows or
    non-numeric cells.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DatasetError([f"cannot read {path}: {exc.strerror}"]) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError([f"{path}: empty file"]) from None
        header = [h.strip() for h in header]
        for name, flag in ((outcome, "--outcome"), (treatment, "--treatment")):
            if name not in header:
                raise DatasetError([f"{flag} column {name!r} not in header"])
        if outcome == treatment:
            raise DatasetError(["outcome and treatment must be different columns"])
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError([f"line {line}: expected {len(header)} fields, got {len(row)}"])
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise DatasetError([f"line {line}: non-numeric value {bad!r}"]) from None
    if not rows:
        raise DatasetError([f"{path}: no data rows"])
    data = np.array(rows)
    iy = header.index(outcome)
    id_ = header.index(treatment)
    covs = [j for j in range(len(header)) if j not in (iy, id_)]
    if not covs:
        raise DatasetError(["no covariate columns"])
    ds = validate_dataset(data[:, iy], data[:, id_], data[:, covs])
    return ds, [header[j] for j in covs]


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


# ----------------------------------------------------------------- commands


def cmd_estimate(args) -> int:
    started = time.time()
    singles, multi = parse_models(args.models)
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    dataset, names = read_trial_csv(args.data, args.outcome, args.treatment)
    kept = None
    if args.screen is not None:
        if not 1 <= args.screen <= dataset.p:
            raise UsageError(f"--screen must lie in [1, {dataset.p}]")
        if not args.screen_within:
            kept = sis_screen(dataset, args.screen).kept
            dataset = dataset.with_columns(kept)
    estimators = default_estimators(singles, multi)
    reports = run_estimators(dataset, estimators, k=args.folds, seed=args.seed,
                             multi_models=singles,
                             screen_within=args.screen if args.screen_within else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, rep in zip(estimators, reports):
        method, model = parse_estimator(label)
        rows.append((method, model, rep.theta_hat, rep.se, *rep.ci95, *rep.ci99,
                     rep.n, rep.p, rep.k, args.seed, "; ".join(rep.warnings)))
    _write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    _manifest(out, "estimate", args, started, seed=args.seed,
              covariates_kept=[names[j] for j in kept] if kept is not None else None)
    if not args.quiet:
        for r in rows:
            label = f"{r[0]}:{r[1]}" if r[1] else r[0]
            print(f"{label:<18} {r[2]: .4f}  se {r[3]:.4f}  95% [{r[4]:.4f}, {r[5]:.4f}]"
                  + (f"  ({r[12]})" if r[12] else ""))
    return EXIT_OK


def _raw_rows(records: list[RepRecord]):
    for r in records:
        yield (r.rep, r.estimator, r.model, r.estimate, r.se, r.covered95, r.covered99, r.error)


def read_raw_csv(path: str | Path) -> list[RepRecord]:
    """Inverse of the raw file written by ``simulate``; CI lengths are rebuilt from se."""
    from .simulation import ci_length

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            se = float(row["se"])
            out.append(RepRecord(
                rep=int(row["rep"]), estimator=row["estimator"], model=row["model"],
                estimate=float(row["estimate"]), se=se,
                covered95=row["covered95"] == "1", covered99=row["covered99"] == "1",
                ci95_len=ci_length(se, 0.95), ci99_len=ci_length(se, 0.99),
                error=row.get("error", ""),
            ))
    return out


def _metric_rows(rows):
    for m in rows:
        yield (m.estimator, m.model, m.bias, m.sd, m.se, m.rmse, m.cov95, m.cov99,
               m.theta, m.reps, m.failures, m.warnings)


def _progress(enabled: bool):
    if not enabled:
        return None

    def report(done, total):
        if done == total or done % max(1, total // 20) == 0:
            print(f"  {done}/{total} replications", file=sys.stderr)

    return report


def cmd_simulate(args) -> int:
    started = time.time()
    singles, multi = parse_models(args.models)
    spec = _sim_spec(args.design, args.n, args.p, args.rho, args.reps, args.folds, args.seed,
                     default_estimators(singles, multi), singles)
    records, rows = monte_carlo_run(spec, workers=args.workers,
                                    progress=_progress(not args.quiet))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "raw.csv", RAW_COLUMNS, _raw_rows(records))
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, _metric_rows(rows))
    _manifest(out, "simulate", args, started, theta=true_theta(spec),
              rep_seeds=[args.seed, args.seed + args.reps - 1])
    if not args.quiet:
        print(f"theta = {true_theta(spec):.6f}")
        for m in rows:
            print(f"{m.label:<18} bias {m.bias: .4f}  sd {m.sd:.4f}  se {m.se:.4f}  "
                  f"rmse {m.rmse:.4f}  cov95 {m.cov95:.3f}  cov99 {m.cov99:.3f}"
                  + (f"  ({m.warnings})" if m.warnings else ""))
    return EXIT_NUMERICAL if all(m.reps == 0 for m in rows) else EXIT_OK


def cmd_figures(args) -> int:
    started = time.time()
    grid = parse_grid(args.n_grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    panel, raw = [], []
    all_failed = True
    for n in grid:
        spec = _sim_spec(args.design, n, args.p, FIGURE_RHO[args.design], args.reps, args.folds,
                         args.seed, FIGURE_ESTIMATORS, ("lasso",))
        records, rows = monte_carlo_run(spec, workers=args.workers)
        all_failed &= all(m.reps == 0 for m in rows)
        for m in rows:
            panel.append((n, m.label, m.mean_sq_ci_len_95, m.mean_sq_ci_len_99, m.cov95, m.cov99))
            if not args.quiet:
                print(f"n={n:<5} {m.label:<18} cov95 {m.cov95:.3f}  "
                      f"mean sq len95 {m.mean_sq_ci_len_95:.4f}", file=sys.stderr)
        raw.extend((n, *row) for row in _raw_rows(records))
    _write_csv(out / f"{args.design}.csv", FIGURE_COLUMNS, panel)
    _write_csv(out / f"{args.design}_raw.csv", ("n",) + RAW_COLUMNS, raw)
    _manifest(out, "figures", args, started)
    return EXIT_NUMERICAL if all_failed else EXIT_OK


def _sim_spec(design, n, p, rho, reps, k, seed, estimators, singles) -> SimulationSpec:
    try:
        return SimulationSpec(design=design, n=n, p=p, rho=rho, reps=reps, k=k,
                              estimators=tuple(estimators), seed=seed, multi_models=singles)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def recompute_metrics(raw_path, theta: float):
    """Metrics rebuilt from a raw CSV; matches the emitted metrics file exactly."""
    return aggregate(read_raw_csv(raw_path), theta)


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdel", description="Cross-fitted empirical-likelihood ATE estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, models_default):
        p.add_argument("--models", default=models_default,
                       help="comma list from lasso, scad, rf, multi (default %(default)s)")
        p.add_argument("--folds", type=int, default=5, help="cross-fitting folds K (default 5)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="mdel-output", help="output directory")
        p.add_argument("--quiet", action="store_true")

    est = sub.add_parser("estimate", help="estimate the ATE of one trial from a CSV file")
    est.add_argument("--data", required=True, help="CSV with a header row")
    est.add_argument("--outcome", required=True, help="outcome column name")
    est.add_argument("--treatment", required=True, help="0/1 treatment column name")
    est.add_argument("--screen", type=int, metavar="DX",
                     help="keep the DX covariates most correlated with the outcome")
    est.add_argument("--screen-within", action="store_true",
                     help="screen inside each training fold instead of once up front")
    common(est, "lasso,scad,rf,multi")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="Monte Carlo study of one simulation design",
                         description="Monte Carlo study. Full-scale runs (e.g. --reps 5000 "
                                     "at --n 800 --p 1000) work offline; use --workers.")
    sim.add_argument("--design", required=True, choices=("sparse", "fan", "geometric"))
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--rho", type=float, default=0.0)
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common(sim, "lasso")
    sim.set_defaults(func=cmd_simulate)

    fig = sub.add_parser("figures", help="coverage and interval length over a grid of n")
    fig.add_argument("--design", required=True, choices=tuple(FIGURE_RHO))
    fig.add_argument("--n-grid", default="100:500:100", help="start:stop:step (default %(default)s)")
    fig.add_argument("--p", type=int, default=500)
    fig.add_argument("--reps", type=int, required=True)
    fig.add_argument("--folds", type=int, default=5)
    fig.add_argument("--seed", type=int, default=0)
    fig.add_argument("--workers", type=int, default=1)
    fig.add_argument("--out", default="mdel-output")
    fig.add_argument("--quiet", action="store_true")
    fig.set_defaults(func=cmd_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mdel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"mdel: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
