"""Exact nearest-neighbor search over 3D point sets.

A balanced KD-tree answers K-nearest, fixed-radius, and 1-nearest queries.
Results are exact and deterministic: candidates are ordered by ascending
Euclidean distance with ties broken by ascending source index, so any query
is bit-identical to a brute-force scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .rng import Rng

__all__ = ["SpatialIndex", "NeighborIndex", "build_index", "knn", "radius_neighbors", "nearest"]


@dataclass(frozen=True)
class NeighborIndex:
    """Q x K neighbor table: rows sorted by ascending distance, index tie-break."""

    indices: np.ndarray            # (Q, K) int64
    distances: Optional[np.ndarray] = None  # (Q, K) float64, meters


class SpatialIndex:
    """Immutable KD-tree over N points; safe for concurrent queries."""

    def __init__(self, coords: np.ndarray, leaf_size: int = 16):
        coords = np.ascontiguousarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must be (N, 3), got {coords.shape}")
        if coords.shape[0] < 1:
            raise ValueError("cannot index an empty point set")
        if not np.isfinite(coords).all():
            raise ValueError("coords contain NaN or Inf")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.coords = coords
        self.n = coords.shape[0]
        self.leaf_size = leaf_size
        (self._perm, self._split_dim, self._split_val,
         self._left, self._right, self._start, self._end) = _kernels.build_tree(coords, leaf_size)

    def _tree_args(self):
        return (self.coords, self._perm, self._split_dim, self._split_val,
                self._left, self._right, self._start, self._end)


def build_index(coords: np.ndarray, leaf_size: int = 16) -> SpatialIndex:
    return SpatialIndex(coords, leaf_size=leaf_size)


def _as_queries(queries: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q.reshape(1, 3)
    if q.ndim != 2 or q.shape[1] != 3:
        raise ValueError(f"queries must be (Q, 3), got {queries.shape}")
    return q


def knn(index: SpatialIndex, queries: np.ndarray, k: int,
        exclude_ids: Optional[np.ndarray] = None) -> NeighborIndex:
    """Exact k nearest source points per query row.

    When a query coincides with a source point the point itself is returned
    (distance 0).  `exclude_ids[row]` names one source index to skip for that
    row, which turns self-inclusion off for queries taken from the indexed set.
    """
    q = _as_queries(queries)
    if exclude_ids is None:
        excl = np.full(q.shape[0], -1, dtype=np.int64)
        budget = index.n
    else:
        excl = np.asarray(exclude_ids, dtype=np.int64)
        if excl.shape != (q.shape[0],):
            raise ValueError("exclude_ids must have one entry per query")
        budget = index.n - 1
    if not 1 <= k <= budget:
        raise ValueError(f"k={k} out of range for {index.n} indexed points")
    if q.shape[0] >= 8192:  # thread launch overhead dwarfs small batches
        idx, dist = _kernels.knn_query(*index._tree_args(), q, k, excl)
    else:
        idx, dist = _kernels.knn_query_serial(*index._tree_args(), q, k, excl)
    return NeighborIndex(indices=idx, distances=dist)


def nearest(index: SpatialIndex, queries: np.ndarray) -> np.ndarray:
    """Index of the single nearest source point per query (ties: smaller index)."""
    return knn(index, queries, 1).indices[:, 0]


def radius_neighbors(index: SpatialIndex, queries: np.ndarray, radius: float,
                     k: int, rng: Rng) -> NeighborIndex:
    """All points within `radius`, downsampled or padded to exactly k per row.

    Rows with more than k in-radius points are thinned by a uniform seeded
    draw without replacement; rows with fewer repeat their nearest in-radius
    point (the query itself when it is a source point).  A row with zero
    in-radius points has no valid padding source and raises.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = _as_queries(queries)
    offsets, flat_idx, flat_dist = _kernels.radius_query(*index._tree_args(), q, float(radius))
    out_idx = np.empty((q.shape[0], k), dtype=np.int64)
    out_dist = np.empty((q.shape[0], k), dtype=np.float64)
    for row in range(q.shape[0]):
        lo, hi = offsets[row], offsets[row + 1]
        if hi == lo:
            raise ValueError(f"no points within radius {radius} of query row {row}")
        cand_idx = flat_idx[lo:hi]
        cand_dist = flat_dist[lo:hi]
        order = np.lexsort((cand_idx, cand_dist))
        cand_idx = cand_idx[order]
        cand_dist = cand_dist[order]
        count = cand_idx.shape[0]
        if count > k:
            pick = np.sort(rng.sample_indices(count, k))
            out_idx[row] = cand_idx[pick]
            out_dist[row] = cand_dist[pick]
        elif count == k:
            out_idx[row] = cand_idx
            out_dist[row] = cand_dist
        else:
            pad = k - count
            out_idx[row, :pad] = cand_idx[0]
            out_dist[row, :pad] = cand_dist[0]
            out_idx[row, pad:] = cand_idx
            out_dist[row, pad:] = cand_dist
    return NeighborIndex(indices=out_idx, distances=out_dist)
