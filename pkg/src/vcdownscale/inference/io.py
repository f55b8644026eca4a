"""CSV serialization of fits and posterior draws, and a chain diagnostics report."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..covariance import TaperSpec, TemporalStructure
from ..exceptions import DataError
from .mcmc import PosteriorDraws
from .model import ModelSpec, ParamLayout
from .optimize import FitResult

_META = ("method", "kind", "q", "temporal", "varying_intercept", "varying_slopes", "family",
         "nu", "taper_range", "loglik", "iterations", "converged", "elapsed_seconds", "jitter")


def _model_meta(model: ModelSpec, taper: TaperSpec | None) -> dict:
    return {
        "kind": model.kind, "q": model.q, "temporal": model.temporal.kind,
        "varying_intercept": int(model.varying_intercept),
        "varying_slopes": int(model.varying_slopes),
        "family": model.family, "nu": repr(float(model.nu)),
        "taper_range": "" if taper is None else repr(float(taper.taper_range)),
    }


def _model_from(meta: dict) -> tuple[ModelSpec, TaperSpec | None]:
    try:
        model = ModelSpec(meta["kind"], int(meta["q"]), TemporalStructure(meta["temporal"]),
                          bool(int(meta["varying_intercept"])), bool(int(meta["varying_slopes"])),
                          meta["family"], float(meta["nu"]))
    except KeyError as exc:
        raise DataError(f"missing field {exc.args[0]!r}") from None
    taper = TaperSpec(float(meta["taper_range"])) if meta.get("taper_range") else None
    return model, taper


def write_fit_csv(fit: FitResult, path) -> None:
    """Rows ``name,value``: run metadata first, then natural-scale parameters."""
    layout = ParamLayout(fit.model, with_beta=True)
    meta = _model_meta(fit.model, fit.taper)
    meta.update(method=fit.method, loglik=repr(float(fit.loglik)), iterations=fit.iterations,
                converged=int(fit.converged), elapsed_seconds=repr(float(fit.elapsed_seconds)),
                jitter=repr(float(fit.jitter)))
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for key in _META:
            w.writerow([key, meta[key]])
        for name, value in zip(layout.names, layout.natural(fit.estimates)):
            w.writerow([name, repr(float(value))])


def read_fit_csv(path) -> FitResult:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["name", "value"]:
        raise DataError(f"{path}: expected header name,value")
    table = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"{path}:{lineno}: expected two fields")
        table[row[0]] = row[1]
    model, taper = _model_from(table)
    layout = ParamLayout(model, with_beta=True)
    try:
        values = np.array([float(table[n]) for n in layout.names])
    except KeyError as exc:
        raise DataError(f"{path}: missing parameter {exc.args[0]!r}") from None
    return FitResult(layout.from_natural(values), float(table["loglik"]), int(table["iterations"]),
                     bool(int(table["converged"])), float(table["elapsed_seconds"]),
                     table["method"], model, taper, float(table["jitter"]))


def write_draws_csv(draws: PosteriorDraws, path) -> None:
    """One column per parameter plus ``log_post``; model metadata in ``#`` comment lines."""
    meta = _model_meta(draws.model, draws.taper)
    meta["acceptance_rate"] = repr(float(draws.acceptance_rate))
    meta["elapsed_seconds"] = repr(float(draws.elapsed_seconds))
    meta["fixed"] = ";".join(f"{k}={v!r}" for k, v in sorted(draws.fixed.items()))
    with open(Path(path), "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh)
        w.writerow(list(draws.names) + ["log_post"])
        lp = draws.log_post if draws.log_post is not None else np.full(draws.n_draws, np.nan)
        for row, l in zip(draws.draws, lp):
            w.writerow([repr(float(v)) for v in row] + [repr(float(l))])


def read_draws_csv(path) -> PosteriorDraws:
    from .mcmc import effective_sample_size

    meta, lines = {}, []
    with open(Path(path)) as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                meta[key] = value
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        raise DataError(f"{path}: no draws")
    model, taper = _model_from(meta)
    names = tuple(rows[0][:-1])
    if names != ParamLayout(model, with_beta=True).names:
        raise DataError(f"{path}: columns do not match the model parameters")
    data = np.array(rows[1:], dtype=float)
    fixed = {}
    for item in filter(None, meta.get("fixed", "").split(";")):
        k, _, v = item.partition("=")
        fixed[k] = float(v)
    draws = data[:, :-1]
    ess = np.array([effective_sample_size(draws[:, i]) for i in range(draws.shape[1])])
    return PosteriorDraws(names, draws, float(meta["acceptance_rate"]), ess, model, taper,
                          data[:, -1], float(meta["elapsed_seconds"]), fixed)


def diagnostics_report(draws: PosteriorDraws) -> str:
    lines = [f"draws: {draws.n_draws}", f"acceptance_rate: {draws.acceptance_rate:.4f}",
             f"elapsed_seconds: {draws.elapsed_seconds:.3f}", "effective sample size:"]
    width = max(len(n) for n in draws.names)
    for name, e in zip(draws.names, draws.ess):
        note = " (fixed)" if name in draws.fixed else ""
        lines.append(f"  {name:<{width}}  {e:10.1f}{note}")
    return "\n".join(lines) + "\n"
