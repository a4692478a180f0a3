"""Command-line entry point: synth, run, hpo, gradcheck, report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import hpo as hpo_mod
from . import lstm
from .config import RunConfig, load_config
from .dataio import format_kpi_csv, order_series, read_inputs, safe_name
from .errors import KpiError
from .evaluation import EvalReport, build_report
from .forecasting import holdout_mape, rolling_scores, run_pipeline, with_training
from .series import KpiKind
from .synthetic import DATA_START, default_archetypes, generate_city, generate_dataset

log = logging.getLogger("hotelcast")

GRADCHECK_TOL = 1e-4


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return replace(cfg, **changes)


# --------------------------------------------------------------------------
# synth


def cmd_synth(args, cfg: RunConfig) -> int:
    months = args.months if args.months is not None else cfg.synthetic.months
    noise = args.noise_sigma if args.noise_sigma is not None else cfg.synthetic.noise_sigma
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for profile in default_archetypes(cfg.seed):
            if noise is not None:
                profile = replace(profile, noise_sigma=noise)
            series = generate_city(profile, DATA_START, months)
            path = out / f"{safe_name(profile.name)}.csv"
            _write(path, format_kpi_csv(series))
            log.info("wrote %s", path)
    except KpiError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: cannot write to {out}: {e}", file=sys.stderr)
        return 2
    return 0


# --------------------------------------------------------------------------
# run


def _load_series(cfg: RunConfig):
    if cfg.synth or not cfg.input:
        series = generate_dataset(seed=cfg.seed, n_months=cfg.synthetic.months,
                                  noise_sigma=cfg.synthetic.noise_sigma)
        errors = []
    else:
        series, errors = read_inputs(cfg.input)
    series = order_series(series)
    if cfg.cities:
        series = [s for s in series if s.city in cfg.cities]
    return series, errors


def cmd_run(args, cfg: RunConfig) -> int:
    if args.input:
        cfg = replace(cfg, input=args.input, synth=False)
    if args.synth:
        cfg = replace(cfg, synth=True)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    try:
        series, ingest_errors = _load_series(cfg)
    except (KpiError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    pcfg = cfg.pipeline_config()
    out = Path(cfg.out)

    def one(s):
        t0 = time.perf_counter()
        try:
            result = run_pipeline(s, pcfg)
            return s, result, None, time.perf_counter() - t0
        except KpiError as e:
            return s, None, e, time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        outcomes = list(pool.map(one, series))

    entries, pairs = [], {}
    for s, result, err, seconds in outcomes:
        entry = {"city": s.city, "kpi": s.kind.value, "seconds": round(seconds, 3)}
        if err is not None:
            entry.update(status="failed", stage=err.stage, code=err.code, message=err.message)
            log.error("%s/%s failed: %s", s.city, s.kind.value, err)
        else:
            stem = f"{safe_name(s.city)}_{s.kind.value}"
            _write(out / "forecasts" / f"{stem}.csv", result.to_csv())
            (out / "models").mkdir(parents=True, exist_ok=True)
            lstm.save_model(result.model, out / "models" / f"{stem}.lstm")
            entry.update(
                status="ok",
                epochs_run=len(result.history),
                best_epoch=result.history.best_epoch,
                outliers_replaced=sum(result.outlier_flags),
                warnings=result.warnings,
            )
            pairs[(s.city, s.kind)] = rolling_scores(result)
        entries.append(entry)
    for e in ingest_errors:
        entries.append({**e.as_dict(), "status": "failed", "stage": "ingest", "code": "BAD_ROW"})
        log.error("%s/%s rejected at line %d: %s", e.city, e.kpi, e.line, e.message)

    if pairs:
        report = build_report(pairs, [s.city for s in series])
        _write(out / "report.csv", report.to_csv())
        _write(out / "report.txt", report.render())
        if not args.quiet:
            print(report.render(), end="")

    failed = sum(e["status"] == "failed" for e in entries)
    manifest = {
        "version": 1,
        "seed": cfg.seed,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "series": entries,
        "failed": failed,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 1 if failed or not pairs else 0


# --------------------------------------------------------------------------
# hpo

TRIAL_COLUMNS = ("index", "lookback", "hidden_size", "learning_rate", "epochs", "score", "status", "error")


def format_trials(trials) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for t in trials:
        p = t.params
        w.writerow([t.index, p["lookback"], p["hidden_size"], repr(p["learning_rate"]), p["epochs"],
                    "" if t.score is None else repr(t.score), "ok" if t.ok else "failed", t.error])
    return buf.getvalue()


def cmd_hpo(args, cfg: RunConfig) -> int:
    if args.input:
        cfg = replace(cfg, input=args.input, synth=False)
    method = args.method or cfg.hpo.method
    budget = args.budget if args.budget is not None else cfg.hpo.budget
    try:
        series, _ = _load_series(cfg)
        kind = KpiKind(args.kpi.upper())
        matches = [s for s in series if s.city == args.city and s.kind is kind]
        if not matches:
            raise KpiError("NOT_FOUND", f"no series for {args.city}/{kind.value}")
        target = matches[0]
    except (KpiError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    base = cfg.pipeline_config()

    def objective(params):
        return holdout_mape(target, with_training(base, **params))

    space = cfg.search_space()
    try:
        if method == "grid":
            best, trials = hpo_mod.grid_search(space, objective)
        else:
            best, trials = hpo_mod.bayesian_search(space, budget, cfg.seed, objective)
    except KpiError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out = Path(cfg.out)
    _write(out / "trials.csv", format_trials(trials))
    _write(out / "best_config.json", cfg.with_best(best.params).dumps())
    if not args.quiet:
        print(f"{len(trials)} trials, best #{best.index}: {best.params} validation MAPE {best.score:.4f}%")
    return 0


# --------------------------------------------------------------------------
# gradcheck / report


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    err = lstm.gradient_check(n_models=args.models, seed=cfg.seed, corrupt=args.corrupt)
    print(f"max relative error {err:.6e}")
    return 0 if err < GRADCHECK_TOL else 1


def cmd_report(args, cfg: RunConfig) -> int:
    try:
        report = EvalReport.from_csv(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError, KpiError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    text = report.render()
    if args.out is not None:
        _write(Path(cfg.out) / "report.txt", text)
    print(text, end="")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="master seed for data generation and training")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="hotelcast", description="LSTM forecasting of hotel KPIs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write the five synthetic city datasets")
    p.add_argument("--months", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="run the full pipeline")
    p.add_argument("--input", help="CSV file or directory of CSV files")
    p.add_argument("--synth", action="store_true", help="use generated data instead of --input")
    p.add_argument("--workers", type=int, help="series trained in parallel")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("hpo", parents=[common], help="hyperparameter search for one series")
    p.add_argument("--input")
    p.add_argument("--city", required=True)
    p.add_argument("--kpi", required=True)
    p.add_argument("--method", choices=["grid", "bayes"])
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_hpo)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the BPTT gradients")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", parents=[common], help="re-render a saved report.csv")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config(args)
    except KpiError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
