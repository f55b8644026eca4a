"""Reading and writing the gridded dataset CSV.

Schema: header ``time,x,y,value[,covariate_1,...,covariate_q]``, one row per
(time, location).  ``time`` is an integer period index or an ISO date
(``YYYY-MM`` or ``YYYY-MM-DD``) mapped to consecutive monthly indices.
Locations forming a complete regular lattice load as a gridded field;
anything else loads as a station list for point evaluation.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import DataError
from ..grid import SpatialDomain
from ..simulate import SpaceTimeField

_REQUIRED = ["time", "x", "y", "value"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Result of :func:`ingest_csv`.

    ``kind`` is ``"grid"`` (``field`` and optional ``covariates`` set) or
    ``"stations"`` (``coords`` and ``values`` set, ``field`` is None).
    ``values`` always has shape ``(T, n_locations)`` with NaN for missing.
    """

    kind: str
    times: np.ndarray
    coords: np.ndarray
    values: np.ndarray
    field: SpaceTimeField | None = None
    covariates: np.ndarray | None = None
    shape: tuple[int, int] | None = None
    raw_times: np.ndarray | None = None

    def train_mask(self, train_end=None) -> np.ndarray:
        """Periods at or before ``train_end`` (all periods when None)."""
        if train_end is None:
            return np.ones(len(self.times), dtype=bool)
        cut, _ = _parse_time(str(train_end), 0)
        return self.raw_times <= cut

    def describe(self) -> str:
        if self.kind == "grid":
            return f"grid {self.shape[0]} x {self.shape[1]} ({len(self.coords)} points), {len(self.times)} periods"
        return f"{len(self.coords)} stations, {len(self.times)} periods"


def _parse_time(text: str, lineno: int):
    text = text.strip()
    try:
        return int(text), False
    except ValueError:
        pass
    for fmt in ("%Y-%m-%d", "%Y-%m"):
        try:
            d = dt.datetime.strptime(text, fmt)
        except ValueError:
            continue
        return d.year * 12 + d.month - 1, True
    raise DataError(f"line {lineno}: cannot parse time {text!r}")


def _parse_float(text: str, lineno: int, column: str, allow_missing: bool = False) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na"):
        if allow_missing:
            return math.nan
        raise DataError(f"line {lineno}: missing {column}")
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {lineno}: cannot parse {column} {text!r}") from None


def _regular_axis(values: np.ndarray, rtol: float = 1e-6):
    """Step of an evenly spaced sorted axis, or None."""
    if len(values) == 1:
        return 1.0
    d = np.diff(values)
    return float(d.mean()) if np.allclose(d, d[0], rtol=rtol, atol=0.0) else None


def ingest_csv(path, train_end: int | str | None = None) -> Dataset:
    """Load a dataset CSV.

    Parameters
    ----------
    train_end : int or str, optional
        Last training period (same format as the ``time`` column).  Missing
        values are rejected at or before it and allowed after it.  Without it
        every period counts as training.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:4] != _REQUIRED:
            raise DataError(f"{path}: header must start with {','.join(_REQUIRED)}")
        q = len(header) - 4
        for j, h in enumerate(header[4:], start=1):
            if h != f"covariate_{j}":
                raise DataError(f"{path}: unexpected column {h!r}")
        keys, rows, dated = {}, [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            t, is_date = _parse_time(row[0], lineno)
            dated.add(is_date)
            x = _parse_float(row[1], lineno, "x")
            y = _parse_float(row[2], lineno, "y")
            key = (t, x, y)
            if key in keys:
                raise DataError(f"{path}: line {lineno}: duplicate (time, x, y), first seen on line {keys[key]}")
            keys[key] = lineno
            v = _parse_float(row[3], lineno, "value", allow_missing=True)
            cov = [_parse_float(c, lineno, f"covariate_{j + 1}") for j, c in enumerate(row[4:])]
            rows.append((t, x, y, v, cov, lineno))
    if not rows:
        raise DataError(f"{path}: no data rows")
    if len(dated) > 1:
        raise DataError(f"{path}: mixes integer and date times")
    is_dated = dated.pop()

    raw_times = np.array(sorted({r[0] for r in rows}))
    offset = raw_times[0] - 1 if is_dated else 0
    times = raw_times - offset
    xs = np.unique([r[1] for r in rows])
    ys = np.unique([r[2] for r in rows])
    pts = sorted({(r[1], r[2]) for r in rows}, key=lambda p: (p[1], p[0]))
    dx, dy = _regular_axis(xs), _regular_axis(ys)
    gridded = len(pts) == len(xs) * len(ys) and dx is not None and dy is not None

    if gridded:
        gx, gy = np.meshgrid(xs, ys)
        coords = np.column_stack([gx.ravel(), gy.ravel()])
        pos = {(x, y): i for i, (x, y) in enumerate(coords)}
    else:
        coords = np.array(pts, dtype=float)
        pos = {p: i for i, p in enumerate(pts)}
    tpos = {t: i for i, t in enumerate(raw_times)}
    values = np.full((len(times), len(coords)), np.nan)
    covs = np.full((len(times), len(coords), q), np.nan) if q else None
    first_line = {}
    for t, x, y, v, cov, lineno in rows:
        i, k = tpos[t], pos[(x, y)]
        values[i, k] = v
        first_line[(i, k)] = lineno
        if q:
            covs[i, k] = cov

    if train_end is not None:
        cut, _ = _parse_time(str(train_end), 0)
        train_rows = raw_times <= cut
        if not train_rows.any():
            raise DataError(f"{path}: no periods at or before train_end={train_end}")
    else:
        train_rows = np.ones(len(times), dtype=bool)
    if gridded:
        bad = np.argwhere(np.isnan(values[train_rows]))
        if len(bad):
            i, k = bad[0]
            where = first_line.get((np.flatnonzero(train_rows)[i], k))
            loc = f"line {where}" if where else f"period {raw_times[train_rows][i]}, point {tuple(coords[k])}"
            raise DataError(f"{path}: {len(bad)} missing training value(s), first at {loc}")
        if q and np.isnan(covs).any():
            raise DataError(f"{path}: covariates missing for some (time, location)")
        nx, ny = len(xs), len(ys)
        sx = dx if nx > 1 else dy
        sy = dy if ny > 1 else sx
        extent = (xs[0] - sx / 2, xs[-1] + sx / 2, ys[0] - sy / 2, ys[-1] + sy / 2)
        domain = SpatialDomain(coords, (sx, sy), (nx, ny), extent)
        fld = SpaceTimeField(values, domain, times)
        return Dataset("grid", times, coords, values, fld, covs, (nx, ny), raw_times)
    return Dataset("stations", times, coords, values, None, covs, None, raw_times)


def write_dataset_csv(fld: SpaceTimeField, path, covariates=None) -> None:
    """Write a field in the dataset schema (floats via ``repr`` so they round-trip)."""
    q = 0 if covariates is None else np.asarray(covariates).shape[-1]
    header = list(_REQUIRED) + [f"covariate_{j + 1}" for j in range(q)]
    locs = fld.domain.locations
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(fld.times):
            for k in range(fld.n):
                row = [int(t), repr(float(locs[k, 0])), repr(float(locs[k, 1])),
                       repr(float(fld.values[i, k]))]
                if q:
                    row += [repr(float(c)) for c in covariates[i, k]]
                w.writerow(row)
