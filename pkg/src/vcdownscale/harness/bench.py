"""Timing of exact versus tapered likelihood evaluations.

For each lattice side and taper range, one M1 likelihood evaluation (a
single period, exponential kernel) is timed with both backends.  A warm-up
call first builds the per-domain caches (distance levels, taper pairs, band
ordering), so the timings reflect repeated evaluations inside an optimizer.
"""

from __future__ import annotations

import csv
import statistics
from pathlib import Path

import numpy as np

from ..covariance import TaperGeometry, TaperSpec
from ..grid import SpatialDomain
from ..inference.likelihood import loglik_exact, loglik_tapered
from ..inference.model import ModelSpec, ParamVector
from ..metrics import timed
from ..simulate import SpaceTimeField

BENCH_HEADER = ["side", "n", "taper_range", "nonzero_fraction", "exact_seconds",
                "tapered_seconds", "speedup"]


def bench_case(side: int, taper_range: float, trials: int = 5, seed: int = 0) -> dict:
    """Median exact and tapered evaluation time on a ``side x side`` unit-square lattice."""
    domain = SpatialDomain.lattice((0.0, 1.0, 0.0, 1.0), side)
    model = ModelSpec.preset("M1", family="exponential", nu=0.5)
    params = ParamVector(0.0, (), model.kernel(0.1, 1.0), (), 0.1)
    rng = np.random.default_rng(seed)
    Y = SpaceTimeField(rng.standard_normal((1, domain.n)), domain)
    taper = TaperSpec(taper_range)

    loglik_exact(model, params, Y)
    loglik_tapered(model, params, taper, Y)
    exact = [timed("exact", lambda: loglik_exact(model, params, Y))[1] for _ in range(trials)]
    tapered = [timed("tapered", lambda: loglik_tapered(model, params, taper, Y))[1]
               for _ in range(trials)]
    e, t = statistics.median(exact), statistics.median(tapered)
    return {"side": side, "n": domain.n, "taper_range": taper_range,
            "nonzero_fraction": TaperGeometry.of(domain, taper).nonzero_fraction,
            "exact_seconds": e, "tapered_seconds": t, "speedup": e / t}


def run_bench(sides, taper_ranges, trials: int, out, seed: int = 0) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_HEADER)
        for side in sides:
            for r in taper_ranges:
                row = bench_case(int(side), float(r), trials, seed)
                w.writerow([row["side"], row["n"], row["taper_range"], f"{row['nonzero_fraction']:.6f}",
                            f"{row['exact_seconds']:.6f}", f"{row['tapered_seconds']:.6f}",
                            f"{row['speedup']:.2f}"])
    return path
