"""Approximate high-dimensional Gaussian filtering on the permutohedral lattice.

Computes, for feature points ``f_i`` and values ``v_i``,

    out_i  ~=  sum_j exp(-|f_i - f_j|^2 / 2) * v_j

in O(N d) instead of O(N^2).  Features must be pre-divided by the
desired standard deviation, so a bilateral kernel with spatial sigma
``a`` and color sigma ``b`` uses features ``(x/a, y/a, r/b, g/b, b/b)``.

The three stages are the classic ones: *splat* each point onto the
d+1 vertices of its enclosing simplex with barycentric weights, *blur*
along each lattice direction with a [1, 2, 1]/2 kernel, and *slice* the
result back at the original points.  Splat and slice are sparse
matrix-vector products built once per feature set, so repeated
filtering (mean-field iterations) reuses the lattice.

The output includes the self term (k(i, i) = 1); callers that need a
j != i sum subtract the input values once.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["PermutohedralLattice"]


class _RowIndex:
    """Lookup of integer rows in a lexicographically sorted table.

    Rows are packed into a single int64 with mixed-radix strides, which
    preserves the lexicographic order np.unique(axis=0) produced, so a
    plain searchsorted resolves queries.  Queries outside the table's
    bounding box (or any row missing from the table) map to the
    sentinel ``len(table)``.
    """

    def __init__(self, table: np.ndarray):
        self._n = len(table)
        # leave slack so neighbor queries one step outside still pack
        self._lo = table.min(axis=0) - 1
        spans = table.max(axis=0) - self._lo + 2
        if np.prod(spans.astype(np.float64)) >= 2.0**62:
            raise ValueError("lattice key range too large to pack")
        strides = np.ones(len(spans), dtype=np.int64)
        for i in range(len(spans) - 2, -1, -1):
            strides[i] = strides[i + 1] * spans[i + 1]
        self._spans = spans
        self._strides = strides
        self._packed = self._pack(table)

    def _pack(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self._lo) @ self._strides

    def find(self, queries: np.ndarray) -> np.ndarray:
        shifted = queries - self._lo
        in_box = np.all((shifted >= 0) & (shifted < self._spans), axis=1)
        packed = np.where(in_box[:, None], shifted, 0) @ self._strides
        pos = np.searchsorted(self._packed, packed)
        pos[pos >= self._n] = 0
        hit = in_box & (self._packed[pos] == packed)
        pos[~hit] = self._n
        return pos


class PermutohedralLattice:
    """Lattice built from an (N, d) feature array; filter (N, V) values."""

    def __init__(self, features: np.ndarray):
        f = np.ascontiguousarray(features, dtype=np.float64)
        if f.ndim != 2:
            raise ValueError(f"features must be (N, d), got shape {f.shape}")
        n, d = f.shape
        dpo = d + 1

        # Elevate into the hyperplane H_d.  The per-axis scale makes the
        # lattice blur correspond to a unit-sigma Gaussian in feature space.
        inv_std = np.sqrt(2.0 / 3.0) * dpo
        scale = inv_std / np.sqrt((np.arange(d) + 1.0) * (np.arange(d) + 2.0))
        cf = f * scale
        suffix = np.zeros((n, dpo))
        suffix[:, :d] = np.cumsum(cf[:, ::-1], axis=1)[:, ::-1]
        elevated = np.empty((n, dpo))
        elevated[:, 0] = suffix[:, 0]
        elevated[:, 1:] = suffix[:, 1:] - np.arange(1, dpo) * cf

        # Nearest lattice point whose coordinates sum to zero mod d+1.
        v = elevated / dpo
        up = np.ceil(v) * dpo
        down = np.floor(v) * dpo
        rem0 = np.where(up - elevated < elevated - down, up, down)
        coord_sum = np.rint(rem0.sum(axis=1) / dpo).astype(np.int64)

        # Rank of each coordinate's residual (descending, ties by index).
        resid = elevated - rem0
        order = np.argsort(-resid, axis=1, kind="stable")
        rank = np.empty((n, dpo), dtype=np.int64)
        np.put_along_axis(rank, order, np.broadcast_to(np.arange(dpo), (n, dpo)), axis=1)

        # Walk points with nonzero coordinate sum back onto the hyperplane.
        rank += coord_sum[:, None]
        low = rank < 0
        rank[low] += dpo
        rem0[low] += dpo
        high = rank > d
        rank[high] -= dpo
        rem0[high] -= dpo

        # Barycentric coordinates inside the enclosing simplex.
        bary = np.zeros((n, d + 2))
        vres = (elevated - rem0) / dpo
        rows = np.broadcast_to(np.arange(n)[:, None], (n, dpo))
        np.add.at(bary, (rows, d - rank), vres)
        np.add.at(bary, (rows, d - rank + 1), -vres)
        bary[:, 0] += 1.0 + bary[:, dpo]
        bary = bary[:, :dpo]

        # Vertex keys (first d coordinates; the last is implied by sum 0).
        canonical = np.empty((dpo, dpo), dtype=np.int64)
        for r in range(dpo):
            canonical[r, : dpo - r] = r
            canonical[r, dpo - r:] = r - dpo
        rem0_int = np.rint(rem0[:, :d]).astype(np.int64)
        keys = np.empty((dpo, n, d), dtype=np.int64)
        for r in range(dpo):
            keys[r] = rem0_int + canonical[r][rank[:, :d]]

        uniq, inverse = np.unique(keys.reshape(-1, d), axis=0, return_inverse=True)
        m = len(uniq)
        offsets = inverse.reshape(dpo, n).T  # (n, d+1), vertex index per remainder

        # Blur neighbors along each lattice direction; missing -> sentinel m.
        index = _RowIndex(uniq)
        self._n1 = np.empty((dpo, m), dtype=np.int64)
        self._n2 = np.empty((dpo, m), dtype=np.int64)
        for j in range(dpo):
            plus = uniq + 1
            minus = uniq - 1
            if j < d:
                plus[:, j] = uniq[:, j] - d
                minus[:, j] = uniq[:, j] + d
            self._n1[j] = index.find(plus)
            self._n2[j] = index.find(minus)

        weights = bary.ravel()
        vertex = offsets.ravel()
        point = np.repeat(np.arange(n), dpo)
        self._splat = sp.csr_matrix((weights, (vertex, point)), shape=(m, n))
        self._slice = sp.csr_matrix((weights, (point, vertex)), shape=(n, m))
        self._m = m
        self._dpo = dpo
        # Gain correction for the [1,2,1]/2 blur chain.
        self._alpha = 1.0 / (1.0 + 2.0 ** (-d))

    @property
    def num_vertices(self) -> int:
        return self._m

    def filter(self, values: np.ndarray) -> np.ndarray:
        """Filter an (N, V) value array through the lattice."""
        single = values.ndim == 1
        vals = values[:, None] if single else values
        lat = np.zeros((self._m + 1, vals.shape[1]))
        lat[: self._m] = self._splat @ vals
        for j in range(self._dpo):
            nxt = np.zeros_like(lat)
            nxt[: self._m] = lat[: self._m] + 0.5 * (lat[self._n1[j]] + lat[self._n2[j]])
            lat = nxt
        out = self._alpha * (self._slice @ lat[: self._m])
        return out[:, 0] if single else out
