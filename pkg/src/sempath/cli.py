"""Command line front end.

``sempath fit`` runs a penalty path and writes fits.csv, parameters.csv,
trajectory.csv and final.json; ``sempath curves`` writes penalty curves;
``sempath matrices`` prints the RAM layout; ``sempath simulate`` writes a
simulated data set; ``sempath replicate`` runs the false positive / negative
study.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optimizer import CONVERGED, OptimizerConfig, fit_penalized
from .penalties import KINDS, PenaltyConfig, alasso_weights, penalty_value
from .ram import ModelError, SampleMoments, build_ram, extract_matrices
from .selection import PathConfig, PathError, run_path, suggest_jump
from .syntax import ModelSyntaxError, parse_model, validate_spec

log = logging.getLogger("sempath")

EXIT_OK, EXIT_INPUT, EXIT_NO_CONVERGENCE = 0, 1, 2
CURVE_KINDS = ("lasso", "ridge", "enet", "alasso", "scad", "mcp")


class DataError(ValueError):
    pass


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def load_data(path, ddof: int = 0) -> SampleMoments:
    """Read raw data or a covariance matrix from CSV.

    Raw data: header row of names, one observation per row; rows with empty
    or ``NA`` cells are dropped. Covariance input is flagged by a sidecar
    ``<path>.json`` holding ``{"kind": "covariance", "n": N}`` (optionally
    ``"mean": [...]``).
    """
    path = Path(path)
    header, rows = _read_csv(path)
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}

    def number(cell, i, j):
        try:
            return float(cell)
        except ValueError:
            raise DataError(f"{path}: non-numeric cell {cell!r} at row {i + 2}, column {j + 1}") from None

    if meta.get("kind") == "covariance":
        if "n" not in meta:
            raise DataError(f"{sidecar}: covariance input needs 'n'")
        cov = np.array([[number(c, i, j) for j, c in enumerate(r)] for i, r in enumerate(rows)])
        if cov.shape != (len(header), len(header)):
            raise DataError(f"{path}: covariance must be {len(header)} x {len(header)}")
        mean = meta.get("mean")
        try:
            return SampleMoments(cov=cov, n=int(meta["n"]), var_names=header,
                                 mean=None if mean is None else np.array(mean, dtype=float))
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None

    kept, dropped = [], 0
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(r)} cells, expected {len(header)}")
        cells = [c.strip() for c in r]
        if any(c in ("", "NA", "NaN", "nan") for c in cells):
            dropped += 1
            continue
        kept.append([number(c, i, j) for j, c in enumerate(cells)])
    if len(kept) < 2:
        raise DataError(f"{path}: need at least 2 complete rows, found {len(kept)}")
    if dropped:
        log.info("listwise deletion removed %d row(s)", dropped)
    try:
        data = SampleMoments.from_data(np.array(kept), header, ddof=ddof)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    data.n_dropped = dropped
    return data


def penalty_curves(lam: float = 0.5, gamma: float = 3.7, alpha: float = 0.5,
                   lo: float = -3.0, hi: float = 3.0, n_points: int = 601,
                   alasso_weight: float = 1.0) -> dict:
    """Per-parameter penalty values on a grid for every penalty kind."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError("range must be finite with lo < hi")
    theta = np.linspace(lo, hi, n_points)
    out = {"theta": theta}
    for kind in CURVE_KINDS:
        w = np.array([alasso_weight]) if kind == "alasso" else None
        cfg = PenaltyConfig(kind, lam, alpha, gamma, pars_pen=(1,), weights=w)
        out[kind] = np.array([penalty_value(np.array([x]), cfg) for x in theta])
    return out


def emit_penalty_curves(lam, gamma, alpha, rng, out_path, n_points: int = 601) -> Path:
    curves = penalty_curves(lam, gamma, alpha, rng[0], rng[1], n_points)
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", *CURVE_KINDS])
        for i in range(len(curves["theta"])):
            w.writerow([_num(curves[k][i]) for k in ("theta", *CURVE_KINDS)])
    return out_path


def _num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class RunConfig:
    model: str
    data_path: str
    kind: str = "lasso"
    alpha: float = 0.5
    gamma: float = 3.7
    pars_pen: list | None = None
    n_lambda: int = 20
    jump: float | None = 0.05
    lambda_start: float = 0.0
    metric: str = "bic"
    holdout_path: str | None = None
    method: str = "auto"
    n_starts: int = 1
    seed: int = 0
    out: str = "sempath-out"
    growth: bool = False
    fixed_x: bool = True
    warm_start: bool = True
    n_jobs: int = 1
    ddof: int = 0
    opt_overrides: dict = field(default_factory=dict)


def _model_text(model: str) -> str:
    p = Path(model)
    if "\n" not in model and p.exists():
        return p.read_text()
    return model


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def run(cfg: RunConfig) -> int:
    """Execute one penalty-path run; returns the process exit code."""
    try:
        spec = parse_model(_model_text(cfg.model), growth=cfg.growth, fixed_x=cfg.fixed_x)
        data = load_data(cfg.data_path, cfg.ddof)
        report = validate_spec(spec, data.var_names)
        if report.errors:
            raise ModelError("; ".join(report.errors))
        for w in report.warnings:
            log.warning(w)
        ram = build_ram(spec, data.var_names, data)
        holdout = load_data(cfg.holdout_path, cfg.ddof) if cfg.holdout_path else None
        pars_pen = ram.resolve(cfg.pars_pen)
        if cfg.kind != "none" and not pars_pen:
            raise ValueError("no parameters selected for penalization")
    except (ModelSyntaxError, ModelError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    opt = OptimizerConfig(method=cfg.method, n_starts=cfg.n_starts, seed=cfg.seed,
                          **cfg.opt_overrides)
    n_lambda, lambda_start, jump = cfg.n_lambda, cfg.lambda_start, cfg.jump
    if cfg.kind == "none":
        n_lambda, lambda_start, jump = 1, 0.0, 1.0
    weights, ml = None, None
    if cfg.kind == "alasso" or jump is None:
        ml = fit_penalized(ram, data, PenaltyConfig("none", pars_pen=pars_pen), opt)
    if cfg.kind == "alasso":
        try:
            weights = alasso_weights(ml, pars_pen)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
    pen = PenaltyConfig(cfg.kind, 0.0, cfg.alpha, cfg.gamma, pars_pen, weights)
    if jump is None:
        try:
            jump = suggest_jump(ram, data, pen, n_lambda, opt, ml if ml.conv == CONVERGED else None)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    path = PathConfig(n_lambda=n_lambda, jump=jump, lambda_start=lambda_start, metric=cfg.metric,
                      holdout=holdout, warm_start=cfg.warm_start, n_jobs=cfg.n_jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_path(ram, data, pen, path, opt)
    except PathError as exc:
        _write_fits(out / "fits.csv", exc.fits)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    _write_fits(out / "fits.csv", res.fits)
    _write_csv(out / "parameters.csv", ["lambda", *ram.labels],
               [[lam, *row] for lam, row in zip(res.lambdas, res.parameters)])
    pen_idx = np.array(pars_pen, dtype=np.intp) - 1
    _write_csv(out / "trajectory.csv", ["lambda", *[ram.labels[i] for i in pen_idx]],
               [[lam, *row[pen_idx]] for lam, row in zip(res.lambdas, res.parameters)])
    final = {
        **res.summary(),
        "type": cfg.kind,
        "penalized": [ram.labels[i] for i in pen_idx],
        "final_index": res.final_index,
        "final_fit": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                      for k, v in res.fits[res.final_index].items()},
        "final_pars": {lab: float(v) for lab, v in zip(ram.labels, res.final_pars)},
    }
    (out / "final.json").write_text(json.dumps(final, indent=2) + "\n")
    print(res.summary_text())
    return EXIT_OK


def _write_fits(path, fits):
    header = list(fits[0].keys())
    _write_csv(path, header, [[row[k] for k in header] for row in fits])


def _parse_pars_pen(value):
    if value is None:
        return None
    if value == "all-directed":
        return value
    out = []
    for part in value.split(","):
        part = part.strip()
        if "-" in part and all(x.strip().isdigit() for x in part.split("-", 1)):
            a, b = (int(x) for x in part.split("-", 1))
            out.extend(range(a, b + 1))
        elif part:
            out.append(int(part) if part.isdigit() else part)
    return out


def _jump(value):
    return None if value == "auto" else float(value)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sempath", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="run a penalty path and select a final model")
    f.add_argument("--model", required=True, help="model file or inline model text")
    f.add_argument("--data", required=True, help="CSV of raw data or covariance (see docs)")
    f.add_argument("--type", default="lasso", choices=sorted(KINDS))
    f.add_argument("--lambda-start", type=float, default=0.0)
    f.add_argument("--n-lambda", type=int, default=20)
    f.add_argument("--jump", type=_jump, default=0.05, help="grid step, or 'auto'")
    f.add_argument("--alpha", type=float, default=0.5)
    f.add_argument("--gamma", type=float, default=3.7)
    f.add_argument("--pars-pen", default=None,
                   help="comma list of ids/ranges/labels, or 'all-directed' (default)")
    f.add_argument("--metric", default="bic", choices=["bic", "rmsea"])
    f.add_argument("--holdout", default=None, help="holdout data CSV")
    f.add_argument("--method", default="auto", choices=["grad", "qn", "auto"])
    f.add_argument("--n-starts", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default="sempath-out")
    f.add_argument("--growth", action="store_true", help="growth-model mean structure")
    f.add_argument("--no-fixed-x", action="store_true",
                   help="estimate exogenous covariate moments instead of fixing them")
    f.add_argument("--cold-start", action="store_true",
                   help="start every fit from the default values (allows threads)")
    f.add_argument("--jobs", type=int, default=1, help="threads for cold-start paths")
    f.add_argument("--ddof", type=int, default=0, choices=[0, 1],
                   help="covariance divisor N - ddof")
    f.add_argument("--max-iter", type=int, default=None)
    f.add_argument("--tol", type=float, default=None)
    f.add_argument("--qn-threshold", type=int, default=None)

    c = sub.add_parser("curves", help="write penalty curves as CSV")
    c.add_argument("--lambda", dest="lam", type=float, default=0.5)
    c.add_argument("--gamma", type=float, default=3.7)
    c.add_argument("--alpha", type=float, default=0.5)
    c.add_argument("--range", type=float, nargs=2, default=(-3.0, 3.0))
    c.add_argument("--points", type=int, default=601)
    c.add_argument("--out", default="penalty_curves.csv")

    m = sub.add_parser("matrices", help="print the RAM matrices of a model")
    m.add_argument("--model", required=True)
    m.add_argument("--data", default=None)
    m.add_argument("--growth", action="store_true")

    s = sub.add_parser("simulate", help="write simulated data as CSV")
    s.add_argument("--design", choices=["growth", "cfa"], default="growth")
    s.add_argument("--n", type=int, default=80)
    s.add_argument("--loadings", default="0.7,0.7,0.7,0.7,0.7,0,0")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    r = sub.add_parser("replicate", help="false positive / negative simulation study")
    r.add_argument("--n", type=int, nargs="+", default=[80, 200, 1000])
    r.add_argument("--reps", type=int, default=50)
    r.add_argument("--n-lambda", type=int, default=40)
    r.add_argument("--methods", default="ml,lasso,alasso,scad,mcp")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", default=None, help="CSV report path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "fit":
        overrides = {k: v for k, v in (("max_iter", args.max_iter), ("tol", args.tol),
                                       ("qn_threshold", args.qn_threshold)) if v is not None}
        cfg = RunConfig(model=args.model, data_path=args.data, kind=args.type,
                        alpha=args.alpha, gamma=args.gamma,
                        pars_pen=_parse_pars_pen(args.pars_pen), n_lambda=args.n_lambda,
                        jump=args.jump, lambda_start=args.lambda_start, metric=args.metric,
                        holdout_path=args.holdout, method=args.method, n_starts=args.n_starts,
                        seed=args.seed, out=args.out, growth=args.growth,
                        fixed_x=not args.no_fixed_x, warm_start=not args.cold_start,
                        n_jobs=args.jobs, ddof=args.ddof, opt_overrides=overrides)
        return run(cfg)
    if args.command == "curves":
        emit_penalty_curves(args.lam, args.gamma, args.alpha, args.range, args.out, args.points)
        return EXIT_OK
    if args.command == "matrices":
        try:
            spec = parse_model(_model_text(args.model), growth=args.growth)
            data = load_data(args.data) if args.data else None
            ram = build_ram(spec, data.var_names if data else spec.observed_vars, data)
        except (ModelSyntaxError, ModelError, DataError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        print(extract_matrices(ram)["text"])
        return EXIT_OK
    if args.command == "simulate":
        from .simulate import GROWTH_NAMES, simulate_cfa, simulate_growth
        if args.design == "growth":
            X, names = simulate_growth(args.n, args.seed), GROWTH_NAMES
        else:
            lam = [float(x) for x in args.loadings.split(",")]
            X, names = simulate_cfa(args.n, lam, args.seed), [f"y{k + 1}" for k in range(len(lam))]
        _write_csv(args.out, names, X.tolist())
        return EXIT_OK
    if args.command == "replicate":
        from .simulate import SimDesign, replication_study
        methods = tuple(m.strip() for m in args.methods.split(","))
        reports = []
        for n in args.n:
            rep = replication_study(SimDesign(N=n, n_reps=args.reps, seed=args.seed), methods,
                                    PathConfig(n_lambda=args.n_lambda, jump=None),
                                    n_jobs=args.jobs)
            reports.append(rep)
            print(rep.table())
        if args.out:
            rows = [row for rep in reports for row in rep.rows()]
            with open(args.out, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                w.writeheader()
                w.writerows(rows)
        return EXIT_OK
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
