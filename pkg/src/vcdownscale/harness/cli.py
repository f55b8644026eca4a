"""Command-line entry point: ``vcdownscale <command> [options]``.

Commands
--------
simulate   write coarse/fine/response datasets for a preset scenario
fit        fit a model to a response dataset (ML or MCMC)
predict    predict held-out or future periods from a saved fit
evaluate   score a prediction CSV against observations (grid or stations)
study      scenario x model x replication study (Table-2/3 shaped CSVs)
bench      exact vs tapered likelihood timings

On failure a single JSON line ``{"error": ..., "message": ...}`` goes to
stderr, files written by the failed command are removed and the exit
status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..exceptions import DataError, VCDownscaleError
from ..grid import nearest_indices, write_domain_csv, write_map_csv
from ..inference.io import diagnostics_report, read_draws_csv, read_fit_csv, write_draws_csv, write_fit_csv
from ..inference.mcmc import PosteriorDraws
from ..metrics import interval_score, mse
from ..predict import (
    add_offset, back_transform, evaluate_at_stations, predict_response, read_predictions_csv,
    write_predictions_csv,
)
from ..simulate import simulate_scenario
from .bench import run_bench
from .config import RunConfig, build_config, read_config_file
from .ingest import ingest_csv, write_dataset_csv
from .pipeline import derived_seed, fit_model, model_for
from .scenarios import scenario_catalog
from .study import run_study

log = logging.getLogger("vcdownscale")

METRICS_HEADER = ["label", "split", "scale", "mse", "rmse", "interval_score", "level", "n_pairs",
                  "n_dropped", "n_outside"]


class Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, root):
        self.root = Path(root)
        self.created_root = not self.root.exists()
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            p.unlink(missing_ok=True)
        if self.created_root and self.root.exists():
            for d in sorted(self.root.rglob("*"), reverse=True):
                if d.is_dir() and not any(d.iterdir()):
                    d.rmdir()
            if not any(self.root.iterdir()):
                self.root.rmdir()


def _manifest(outputs: Outputs, command: str, cfg: RunConfig, started: float, extra=None):
    lines = [f"vcdownscale {__version__}", f"command = {command}", f"config_hash = {cfg.digest()}",
             f"wall_clock_seconds = {time.perf_counter() - started:.3f}"]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    outputs.path("manifest.txt").write_text("\n".join(lines) + "\n\n[config]\n" + cfg.as_text())


def _overrides(args) -> dict:
    keys = ("seed", "out", "presets", "models", "replications", "workers", "method", "backend",
            "taper_range", "level", "train_end", "variants", "family", "nu", "n_draws", "burn_in")
    return {k: getattr(args, k, None) for k in keys}


def _load_config(args) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    return build_config(file_values, _overrides(args))


# --------------------------------------------------------------------------- commands

def cmd_simulate(args, cfg: RunConfig, outputs: Outputs, started):
    preset = cfg.presets[0]
    variant = cfg.variants[0] if cfg.variants else None
    scen = scenario_catalog(preset, variant, seed=cfg.seed)
    reps = cfg.replications if args.replications is not None else 1
    for rep in range(reps):
        sub = f"rep{rep:03d}/" if reps > 1 else ""
        data = simulate_scenario(scen, replication=rep)
        Xc = data.X
        Xf = data.fine_covariates()
        write_dataset_csv(data.coarse, outputs.path(sub + "coarse.csv"), Xc)
        write_dataset_csv(data.fine, outputs.path(sub + "fine.csv"), Xf)
        write_dataset_csv(data.response, outputs.path(sub + "response.csv"), Xf)
        write_domain_csv(data.pair.coarse, outputs.path(sub + "coarse_grid.csv"))
        write_domain_csv(data.pair.fine, outputs.path(sub + "fine_grid.csv"))
        write_map_csv(data.pair.map, outputs.path(sub + "map.csv"))
    _manifest(outputs, "simulate", cfg, started,
              {"preset": preset, "variant": scen.variant, "replications": reps,
               "train_periods": int(np.floor(scen.T * scen.train_fraction))})


def _training(path, cfg: RunConfig):
    ds = ingest_csv(path, cfg.train_end)
    if ds.kind != "grid":
        raise DataError(f"{path}: fitting needs a complete regular lattice ({ds.describe()})")
    log.info("loaded %s", ds.describe())
    cut = np.flatnonzero(ds.train_mask(cfg.train_end))
    if len(cut) == 0:
        raise DataError("no training periods")
    train = ds.field.take_times(cut)
    X = None if ds.covariates is None else ds.covariates[cut]
    return ds, train, X


def cmd_fit(args, cfg: RunConfig, outputs: Outputs, started):
    ds, train, X = _training(args.data, cfg)
    q = 0 if X is None else X.shape[2]
    model = model_for(cfg.models[0], cfg, q)
    seed = derived_seed(cfg.seed, "fit", cfg.models[0])
    fit = fit_model(model, train, X, cfg, seed)
    if isinstance(fit, PosteriorDraws):
        write_draws_csv(fit, outputs.path("draws.csv"))
        outputs.path("diagnostics.txt").write_text(diagnostics_report(fit))
    else:
        write_fit_csv(fit, outputs.path("fit.csv"))
    _manifest(outputs, "fit", cfg, started, {"data": args.data, "training_periods": train.T,
                                             "model": model.kind})


def cmd_predict(args, cfg: RunConfig, outputs: Outputs, started):
    ds, train, X = _training(args.data, cfg)
    fit_path = Path(args.fit)
    fit = read_draws_csv(fit_path) if fit_path.name.startswith("draws") else read_fit_csv(fit_path)
    later = ds.times[ds.times > train.times[-1]]
    if args.horizon:
        targets = train.times[-1] + np.arange(1, args.horizon + 1)
    elif len(later):
        targets = later
    else:
        raise DataError("no periods after training; pass --horizon")
    X_target = None
    if fit.model.q:
        if ds.covariates is None or not np.all(np.isin(targets, ds.times)):
            raise DataError("covariates for the target periods are required")
        X_target = ds.covariates[np.searchsorted(ds.times, targets)]
    pred = predict_response(fit, train, targets, cfg.level, None, X, X_target, cfg.n_pred_draws)
    if args.coarse:
        coarse = ingest_csv(args.coarse)
        cmap = nearest_indices(coarse.coords, train.domain.locations)
        rows = np.searchsorted(coarse.times, targets)
        if not np.all(np.isin(targets, coarse.times)):
            raise DataError("coarse field does not cover the target periods")
        pred = add_offset(pred, coarse.values[rows][:, cmap])
    if args.physical:
        pred = back_transform(pred)
    write_predictions_csv(pred, outputs.path("predictions.csv"))
    _manifest(outputs, "predict", cfg, started, {"fit": args.fit, "targets": len(targets)})


def cmd_evaluate(args, cfg: RunConfig, outputs: Outputs, started):
    pred = read_predictions_csv(args.predictions, cfg.level)
    obs = ingest_csv(args.observed)
    keep = np.isin(obs.times, pred.times)
    if not keep.any():
        raise DataError("observations share no periods with the predictions")
    values = obs.values[keep]
    if pred.scale == "physical" and not args.physical_obs:
        values = np.exp(values)
    sub = pred.times[np.isin(pred.times, obs.times[keep])]
    idx = np.searchsorted(pred.times, sub)
    pred = replace(pred, times=pred.times[idx], mean=pred.mean[idx], lower=pred.lower[idx],
                   upper=pred.upper[idx])
    pairs = evaluate_at_stations(pred, obs.coords, values)
    if len(pairs.observed) == 0:
        raise DataError("no observation pairs to score")
    m = mse(pairs.observed, pairs.mean)
    row = [args.label or cfg.models[0], "test", pred.scale, repr(m), repr(float(np.sqrt(m))),
           repr(interval_score(pairs.observed, pairs.lower, pairs.upper, cfg.level)),
           cfg.level, len(pairs.observed), pairs.n_dropped, pairs.n_outside]
    with open(outputs.path("metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        w.writerow(row)
    _manifest(outputs, "evaluate", cfg, started, {"predictions": args.predictions,
                                                  "observed": args.observed})


def cmd_study(args, cfg: RunConfig, outputs: Outputs, started):
    # study outputs are resumable, so only the aggregate files count as partial output
    written = run_study(cfg, outputs.root)
    print(json.dumps({k: str(v) for k, v in written.items()}))


def cmd_bench(args, cfg: RunConfig, outputs: Outputs, started):
    ranges = cfg.bench_taper_ranges if cfg.taper_range is None else (cfg.taper_range,)
    sides = tuple(int(s) for s in args.sides.split(",")) if args.sides else cfg.bench_sides
    path = run_bench(sides, ranges, cfg.bench_trials, outputs.root, cfg.seed)
    outputs.paths.append(path)
    _manifest(outputs, "bench", cfg, started)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "study": cmd_study, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--level", type=float, help="interval level (default 0.95)")
    common.add_argument("--model", dest="models", help="model kind(s): M0, M1, M2, M3 (comma list for study)")
    common.add_argument("--backend", choices=("exact", "tapered"))
    common.add_argument("--taper-range", type=float, dest="taper_range")
    common.add_argument("--method", choices=("ml", "mcmc"))
    common.add_argument("--train-end", dest="train_end", help="last training period (index or YYYY-MM)")
    common.add_argument("--family", choices=("matern", "exponential"))
    common.add_argument("--nu", type=float, help="fixed Matérn smoothness")
    common.add_argument("--n-draws", type=int, dest="n_draws")
    common.add_argument("--burn-in", type=int, dest="burn_in")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vcdownscale", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a preset scenario")
    s.add_argument("--preset", dest="presets", help="scenario preset, e.g. sim2-res1")
    s.add_argument("--variant", dest="variants", help="variance level / kernel variant")
    s.add_argument("--replications", type=int)

    s = sub.add_parser("fit", parents=[common], help="fit a model to a response CSV")
    s.add_argument("--data", required=True, help="response dataset CSV")

    s = sub.add_parser("predict", parents=[common], help="predict from a saved fit")
    s.add_argument("--data", required=True, help="response dataset CSV (training + optional test rows)")
    s.add_argument("--fit", required=True, help="fit.csv or draws.csv")
    s.add_argument("--horizon", type=int, help="forecast this many periods past training")
    s.add_argument("--coarse", help="coarse field CSV; adds C_t(s(w)) back to the response")
    s.add_argument("--physical", action="store_true", help="exponentiate predictions")

    s = sub.add_parser("evaluate", parents=[common], help="score predictions")
    s.add_argument("--predictions", required=True)
    s.add_argument("--observed", required=True, help="dataset CSV on the grid or at stations")
    s.add_argument("--physical-obs", action="store_true",
                   help="observations are already on the physical scale")
    s.add_argument("--label", help="label written to the metrics row")

    s = sub.add_parser("study", parents=[common], help="run the scenario study")
    s.add_argument("--preset", dest="presets", help="comma list of presets")
    s.add_argument("--variant", dest="variants", help="comma list of variants")
    s.add_argument("--replications", type=int)
    s.add_argument("--workers", type=int)

    s = sub.add_parser("bench", parents=[common], help="exact vs tapered timings")
    s.add_argument("--sides", help="comma list of lattice sides")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outputs = None
    try:
        cfg = _load_config(args)
        outputs = Outputs(cfg.out)
        COMMANDS[args.command](args, cfg, outputs, time.perf_counter())
    except (VCDownscaleError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        if outputs is not None:
            outputs.cleanup()
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
