"""Cholesky factorizations with a jitter safeguard.

Dense matrices use LAPACK ``potrf``.  Sparse (tapered) matrices are reordered
with reverse Cuthill-McKee and factorized as band matrices, which keeps the
fill inside the envelope of the taper support.  Neither path forms an
explicit inverse.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph

from .exceptions import NumericalError

JITTER_START = 1e-10
JITTER_MAX = 1e-6


def _jitter_levels(scale: float):
    yield 0.0
    j = JITTER_START
    while j <= JITTER_MAX * (1 + 1e-9):
        yield j * scale
        j *= 10


class DenseCholesky:
    """Lower Cholesky factor of a dense SPD matrix.

    ``jitter`` records the diagonal inflation that was needed (0 if none).
    """

    def __init__(self, a: np.ndarray, scale: float | None = None):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if scale is None:
            scale = float(np.max(np.diag(a))) if n else 1.0
        scale = scale if scale > 0 else 1.0
        for jit in _jitter_levels(scale):
            try:
                if jit:
                    a = a + jit * np.eye(n)
                self.L = linalg.cholesky(a, lower=True, check_finite=False)
            except linalg.LinAlgError:
                continue
            self.jitter = jit
            break
        else:
            raise NumericalError(
                f"Cholesky failed for {n}x{n} matrix after jitter {JITTER_MAX:g}*scale"
            )
        self.n = n

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.L, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b``; ``sum(half_solve(b)**2)`` is the quadratic form."""
        return linalg.solve_triangular(self.L, b, lower=True, check_finite=False)


class BandPattern:
    """Fixed sparsity pattern of a symmetric matrix in band storage.

    Built once per geometry; ``band(diag, offdiag)`` then fills LAPACK lower
    band storage for new numeric values on the same pattern.
    """

    def __init__(self, n: int, rows: np.ndarray, cols: np.ndarray):
        # rows/cols: strictly off-diagonal pairs, each unordered pair once
        self.n = n
        g = sparse.coo_matrix(
            (np.ones(2 * len(rows)), (np.r_[rows, cols], np.r_[cols, rows])),
            shape=(n, n),
        ).tocsr()
        if len(rows):
            perm = csgraph.reverse_cuthill_mckee(g, symmetric_mode=True)
        else:
            perm = np.arange(n)
        self.perm = np.asarray(perm, dtype=np.int64)
        self.iperm = np.empty(n, dtype=np.int64)
        self.iperm[self.perm] = np.arange(n)
        pi = self.iperm[rows]
        pj = self.iperm[cols]
        lo = np.minimum(pi, pj)
        hi = np.maximum(pi, pj)
        self.offset = hi - lo
        self.col = lo
        self.bandwidth = int(self.offset.max()) if len(rows) else 0
        self.diag_pos = self.iperm

    def band(self, diag: np.ndarray, offdiag: np.ndarray) -> np.ndarray:
        ab = np.zeros((self.bandwidth + 1, self.n))
        ab[0, self.diag_pos] = diag
        ab[self.offset, self.col] = offdiag
        return ab


class BandCholesky:
    """Cholesky factor of a symmetric matrix held in permuted band storage."""

    def __init__(self, pattern: BandPattern, diag: np.ndarray, offdiag: np.ndarray,
                 scale: float | None = None):
        ab = pattern.band(diag, offdiag)
        if scale is None:
            scale = float(np.max(diag)) if len(diag) else 1.0
        scale = scale if scale > 0 else 1.0
        for jit in _jitter_levels(scale):
            try:
                trial = ab
                if jit:
                    trial = ab.copy()
                    trial[0] += jit
                self.cb = linalg.cholesky_banded(trial, lower=True, check_finite=False)
            except linalg.LinAlgError:
                continue
            self.jitter = jit
            break
        else:
            raise NumericalError(
                f"banded Cholesky failed (n={pattern.n}) after jitter {JITTER_MAX:g}*scale"
            )
        self.pattern = pattern
        self.n = pattern.n

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.cb[0])))

    def solve(self, b: np.ndarray) -> np.ndarray:
        p = self.pattern
        x = linalg.cho_solve_banded((self.cb, True), b[p.perm], check_finite=False)
        return x[p.iperm]


def sparse_cholesky(a) -> BandCholesky:
    """Factorize a symmetric ``scipy.sparse`` matrix via RCM + band Cholesky."""
    a = sparse.coo_matrix(a)
    diag = np.zeros(a.shape[0])
    on = a.row == a.col
    np.add.at(diag, a.row[on], a.data[on])
    up = a.row < a.col
    rows, cols, vals = a.row[up], a.col[up], a.data[up]
    pattern = BandPattern(a.shape[0], rows, cols)
    return BandCholesky(pattern, diag, vals)


def factorize(a) -> DenseCholesky | BandCholesky:
    """Cholesky factor of a dense or sparse symmetric matrix, with jitter policy."""
    if sparse.issparse(a):
        return sparse_cholesky(a)
    return DenseCholesky(a)
