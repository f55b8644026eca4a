"""Scenario x model x replication study with resumable cells.

Each cell simulates one replication of a preset scenario, fits one model on
the training periods, predicts the held-out periods and (leave one period
out) the training periods, and scores both on the model and exp scales.
Cells are cached as JSON under ``<out>/cells`` keyed by the config hash, so
a rerun with the same settings only computes missing cells.

Replication ``k`` of every scenario uses the same simulation seed, so the
variance levels of one preset are compared on common random numbers.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..metrics import timed
from ..predict import leave_one_period_out, predict_response
from ..simulate import simulate_scenario, split_train_test
from .config import RunConfig
from .pipeline import derived_seed, fit_model, model_for, score_prediction
from .scenarios import DEFAULT_VARIANT, scenario_catalog, variants

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SPLITS = ("train", "test")
SCALES = ("model", "physical")

# settings that select cells rather than change a cell's result
_CELL_EXCLUDE = ("out", "workers", "replications", "presets", "variants", "models",
                 "bench_sides", "bench_taper_ranges", "bench_trials", "train_end")


def is_column(level: float) -> str:
    return f"is{round(level * 100):d}"


def table2_header(level: float = 0.95) -> list[str]:
    return ["model", "scenario", "resolution", "split", "scale", "mse", "rmse", is_column(level)]


TABLE3_HEADER = ["model", "scenario", "resolution", "minutes"]
CELLS_HEADER = ["model", "scenario", "resolution", "replication", "split", "scale", "mse",
                "rmse", "interval_score", "n_pairs"]
TIMINGS_HEADER = ["model", "scenario", "resolution", "replication", "fit_seconds",
                  "predict_seconds"]


def study_cells(cfg: RunConfig) -> list[tuple[str, str, str, int]]:
    cells = []
    for preset in cfg.presets:
        allowed = variants(preset)
        chosen = cfg.variants or allowed
        for v in chosen:
            if v not in allowed:
                continue
            for model in cfg.models:
                for rep in range(cfg.replications):
                    cells.append((preset, v, model, rep))
    if not cells:
        raise ValueError("no study cells: check presets and variants")
    return cells


def run_cell(cfg: RunConfig, cell) -> dict:
    preset, variant, kind, rep = cell
    scen = scenario_catalog(preset, variant, seed=cfg.seed)
    data = simulate_scenario(scen, replication=rep)
    Y = data.response
    X = data.fine_covariates()
    train, test = split_train_test(Y, scen.train_fraction)
    k = train.T
    Xtr = None if X is None else X[:k]
    Xte = None if X is None else X[k:]
    model = model_for(kind, cfg, scen.q, scen.regional.theta0)
    seed = derived_seed(cfg.seed, preset, variant, kind, rep)

    fit, fit_s = timed("fit", lambda: fit_model(model, train, Xtr, cfg, seed))

    def both():
        test_pred = predict_response(fit, train, test.times, cfg.level, None, Xtr, Xte,
                                     cfg.n_pred_draws)
        train_pred = leave_one_period_out(fit, train, cfg.level, Xtr, cfg.n_pred_draws)
        return train_pred, test_pred

    (train_pred, test_pred), pred_s = timed("predict", both)
    rows = []
    for split, pred, obs in (("train", train_pred, train.values), ("test", test_pred, test.values)):
        for rep_ in score_prediction(pred, obs, {}):
            rows.append({"split": split, "scale": rep_.scale, "mse": rep_.mse, "rmse": rep_.rmse,
                         "interval_score": rep_.interval_score, "n_pairs": rep_.n_pairs})
    return {"cell": list(cell), "rows": rows, "fit_seconds": fit_s, "predict_seconds": pred_s,
            "converged": bool(getattr(fit, "converged", True))}


def _cell_path(root: Path, digest: str, cell) -> Path:
    preset, variant, kind, rep = cell
    return root / f"{digest}-{preset}-{variant}-{kind}-r{rep:03d}.json"


def _run_and_store(cfg: RunConfig, cell, path: Path) -> dict:
    result = run_cell(cfg, cell)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result, sort_keys=True))
    os.replace(tmp, path)
    return result


def run_study(cfg: RunConfig, out=None) -> dict:
    """Run (or resume) the study; returns paths of the written tables."""
    start = time.perf_counter()
    out = Path(out or cfg.out)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest(exclude=_CELL_EXCLUDE)
    cells = study_cells(cfg)
    paths = {c: _cell_path(cell_dir, digest, c) for c in cells}
    pending = [c for c in cells if not paths[c].exists()]
    log.info("%d cells, %d cached, %d to run", len(cells), len(cells) - len(pending), len(pending))

    if cfg.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_and_store, cfg, c, paths[c]) for c in pending]
            for f in futures:
                f.result()
    else:
        for c in pending:
            _run_and_store(cfg, c, paths[c])

    results = {c: json.loads(paths[c].read_text()) for c in cells}
    written = write_tables(cfg, results, out)
    manifest = out / "manifest.txt"
    manifest.write_text(
        f"vcdownscale {__version__}\nschema_version = {SCHEMA_VERSION}\n"
        f"config_hash = {cfg.digest()}\ncell_hash = {digest}\n"
        f"python = {platform.python_version()}\nnumpy = {np.__version__}\n"
        f"cells = {len(cells)}\ncells_computed = {len(pending)}\n"
        f"wall_clock_seconds = {time.perf_counter() - start:.3f}\n\n[config]\n" + cfg.as_text()
    )
    written["manifest"] = manifest
    return written


def _order(cell):
    preset, variant, kind, rep = cell
    return (kind, preset, variant, rep)


def write_tables(cfg: RunConfig, results: dict, out: Path) -> dict:
    cells = sorted(results, key=_order)
    groups: dict = {}
    timing: dict = {}
    per_rep = []
    per_time = []
    for c in cells:
        preset, variant, kind, rep = c
        r = results[c]
        timing.setdefault((kind, variant, preset), []).append(r["fit_seconds"])
        for row in r["rows"]:
            key = (kind, variant, preset, row["split"], row["scale"])
            groups.setdefault(key, []).append(row)
            per_rep.append([kind, variant, preset, rep, row["split"], row["scale"],
                            repr(row["mse"]), repr(row["rmse"]), repr(row["interval_score"]),
                            row["n_pairs"]])
        per_time.append([kind, variant, preset, rep, f"{r['fit_seconds']:.3f}",
                         f"{r['predict_seconds']:.3f}"])

    def sort_key(key):
        kind, variant, preset, split, scale = key
        return (kind, preset, variant, SPLITS.index(split), SCALES.index(scale))

    t2 = out / "table2.csv"
    with open(t2, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table2_header(cfg.level))
        for key in sorted(groups, key=sort_key):
            rows = groups[key]
            m = float(np.mean([r["mse"] for r in rows]))
            s = float(np.mean([r["interval_score"] for r in rows]))
            kind, variant, preset, split, scale = key
            w.writerow([kind, variant, preset, split, scale, repr(m), repr(float(np.sqrt(m))), repr(s)])

    t3 = out / "table3.csv"
    with open(t3, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE3_HEADER)
        for key in sorted(timing, key=lambda k: (k[0], k[2], k[1])):
            kind, variant, preset = key
            w.writerow([kind, variant, preset, f"{np.mean(timing[key]) / 60.0:.4f}"])

    tc = out / "cells.csv"
    with open(tc, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CELLS_HEADER)
        w.writerows(per_rep)
    tt = out / "timings.csv"
    with open(tt, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMINGS_HEADER)
        w.writerows(per_time)
    return {"table2": t2, "table3": t3, "cells": tc, "timings": tt}


def read_table2(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


__all__ = ["DEFAULT_VARIANT", "run_cell", "run_study", "study_cells", "read_table2",
           "table2_header", "TABLE3_HEADER", "CELLS_HEADER", "TIMINGS_HEADER"]
