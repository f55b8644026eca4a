"""Regular coarse/fine lattices and the nearest-neighbour map between them.

Points sit at cell centres of an axis-aligned rectangle, so a ``(20, 10)``
pair on ``[0, 20]^2`` puts exactly four fine points in every coarse cell.
Locations are ordered row-major: ``index = iy * nx + ix``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

_CHUNK = 2048


@dataclass(frozen=True)
class GridSpec:
    """Square coarse and fine lattices over a rectangular extent.

    Parameters
    ----------
    extent : tuple of float
        ``(x_min, x_max, y_min, y_max)``.
    fine_side, coarse_side : int
        Number of points per axis of the fine and coarse lattices.
    """

    extent: tuple[float, float, float, float]
    fine_side: int
    coarse_side: int

    def __post_init__(self):
        if len(self.extent) != 4:
            raise ConfigurationError("extent must be (x_min, x_max, y_min, y_max)")
        x0, x1, y0, y1 = (float(v) for v in self.extent)
        if not (x1 > x0 and y1 > y0):
            raise ConfigurationError(f"extent {self.extent} has no positive area")
        if int(self.coarse_side) < 2:
            raise ConfigurationError("coarse_side must be at least 2")
        if int(self.fine_side) < int(self.coarse_side):
            raise ConfigurationError("fine_side must be >= coarse_side")
        object.__setattr__(self, "extent", (x0, x1, y0, y1))
        object.__setattr__(self, "fine_side", int(self.fine_side))
        object.__setattr__(self, "coarse_side", int(self.coarse_side))


@dataclass(frozen=True, eq=False)
class SpatialDomain:
    """An immutable rectangular lattice of 2-D locations.

    ``shape`` is ``(nx, ny)``; the lattice need not be square when it comes
    from ingested data.
    """

    locations: np.ndarray
    spacing: tuple[float, float]
    shape: tuple[int, int]
    extent: tuple[float, float, float, float]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        locs = np.array(self.locations, dtype=float)
        if locs.ndim != 2 or locs.shape[1] != 2 or locs.shape[0] == 0:
            raise ConfigurationError("locations must be a non-empty (n, 2) array")
        locs.flags.writeable = False
        object.__setattr__(self, "locations", locs)

    @classmethod
    def lattice(cls, extent, nx: int, ny: int | None = None) -> "SpatialDomain":
        """Cell-centred lattice with ``nx`` by ``ny`` points over ``extent``."""
        ny = nx if ny is None else ny
        x0, x1, y0, y1 = extent
        dx = (x1 - x0) / nx
        dy = (y1 - y0) / ny
        xs = x0 + dx * (np.arange(nx) + 0.5)
        ys = y0 + dy * (np.arange(ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys)
        locs = np.column_stack([gx.ravel(), gy.ravel()])
        return cls(locs, (dx, dy), (int(nx), int(ny)), tuple(float(v) for v in extent))

    def __len__(self) -> int:
        return self.locations.shape[0]

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @cached_property
    def diameter(self) -> float:
        lo = self.locations.min(axis=0)
        hi = self.locations.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @cached_property
    def min_distance(self) -> float:
        """Smallest distance between two distinct locations."""
        if self.n == 1:
            return np.inf
        if self.shape[0] * self.shape[1] == self.n:
            return float(min(s for s, k in zip(self.spacing, self.shape) if k > 1))
        d = self.distances()
        return float(d[d > 0].min())

    def distances(self) -> np.ndarray:
        """Dense pairwise Euclidean distance matrix (cached, read-only)."""
        if "dist" not in self._cache:
            d = pairwise_distances(self.locations, self.locations)
            d.flags.writeable = False
            self._cache["dist"] = d
        return self._cache["dist"]

    def distance_levels(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique pairwise distances and the inverse index reproducing the matrix.

        On a lattice only a few thousand distinct distances occur, so kernels
        are evaluated once per level and gathered.
        """
        if "levels" not in self._cache:
            levels, inverse = np.unique(self.distances(), return_inverse=True)
            inverse = inverse.reshape(self.n, self.n).astype(np.int32)
            inverse.flags.writeable = False
            self._cache["levels"] = (levels, inverse)
        return self._cache["levels"]

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points lying inside the domain extent."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.extent
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)


@dataclass(frozen=True, eq=False)
class CoarseFineMap:
    fine_to_coarse: np.ndarray
    coarse_to_fine: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class GridPair:
    coarse: SpatialDomain
    fine: SpatialDomain
    map: CoarseFineMap


def pairwise_distances(a, b) -> np.ndarray:
    """Euclidean distances between rows of ``a`` and ``b``.

    Uses the explicit difference form so that every entry is bitwise equal to
    ``sqrt(dx**2 + dy**2)`` evaluated on the same pair elsewhere.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def nearest_indices(domain, points) -> np.ndarray:
    """Index of the nearest domain location for each point (ties -> lowest index).

    ``domain`` may be a :class:`SpatialDomain` or an ``(n, 2)`` array.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(p.shape[0], dtype=np.int64)
    locs = domain.locations if isinstance(domain, SpatialDomain) else np.asarray(domain, dtype=float)
    for start in range(0, p.shape[0], _CHUNK):
        block = p[start:start + _CHUNK]
        dx = block[:, None, 0] - locs[None, :, 0]
        dy = block[:, None, 1] - locs[None, :, 1]
        # argmin returns the first minimum, which is the documented tie-break
        out[start:start + _CHUNK] = np.argmin(dx * dx + dy * dy, axis=1)
    return out


def nearest_in(domain: SpatialDomain, point) -> int:
    """Index of the location in ``domain`` closest to ``point``."""
    return int(nearest_indices(domain, np.asarray(point, dtype=float).reshape(1, 2))[0])


def map_domains(coarse: SpatialDomain, fine: SpatialDomain) -> CoarseFineMap:
    f2c = nearest_indices(coarse, fine.locations)
    f2c.flags.writeable = False
    order = np.argsort(f2c, kind="stable")
    bounds = np.searchsorted(f2c[order], np.arange(coarse.n + 1))
    c2f = tuple(order[bounds[s]:bounds[s + 1]] for s in range(coarse.n))
    return CoarseFineMap(f2c, c2f)


def pair_domains(coarse: SpatialDomain, fine: SpatialDomain) -> GridPair:
    return GridPair(coarse, fine, map_domains(coarse, fine))


def build_grids(spec: GridSpec) -> GridPair:
    """Construct the coarse and fine lattices described by ``spec``."""
    fine = SpatialDomain.lattice(spec.extent, spec.fine_side)
    coarse = SpatialDomain.lattice(spec.extent, spec.coarse_side)
    return pair_domains(coarse, fine)


def write_domain_csv(domain: SpatialDomain, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(domain.locations):
            w.writerow([i, repr(float(x)), repr(float(y))])


def write_map_csv(cmap: CoarseFineMap, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fine_index", "coarse_index"])
        for i, s in enumerate(cmap.fine_to_coarse):
            w.writerow([i, int(s)])
