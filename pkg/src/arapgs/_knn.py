"""Exact k-nearest-neighbor search with deterministic tie-breaking.

Brute force in chunks: exact distances, ties broken by lower point index.
Approximate indices are deliberately avoided; graph construction and
interpolation both require reproducible neighbor sets.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 256


def knn_points(
    queries: np.ndarray,
    points: np.ndarray,
    k: int,
    skip_index: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest `points` for each query.

    skip_index optionally gives, per query, one point index to exclude
    (used when querying a point set against itself).  Results are sorted by
    (distance, index); coincident points therefore resolve to the lower index.
    """
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    nq = queries.shape[0]
    npts = points.shape[0]
    take = k if skip_index is None else k + 1
    if take > npts:
        raise ValueError(f"k={k} too large for {npts} points")

    idx_out = np.empty((nq, k), dtype=np.int64)
    dist_out = np.empty((nq, k), dtype=np.float64)
    for start in range(0, nq, _CHUNK):
        stop = min(start + _CHUNK, nq)
        block = queries[start:stop]
        d2 = (
            np.sum(block**2, axis=1)[:, None]
            - 2.0 * block @ points.T
            + np.sum(points**2, axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        for r in range(stop - start):
            row = d2[r]
            if take < npts:
                part = np.argpartition(row, take - 1)[:take]
                thresh = row[part].max()
                cand = np.nonzero(row <= thresh)[0]
            else:
                cand = np.arange(npts)
            order = np.lexsort((cand, row[cand]))
            sel = cand[order]
            if skip_index is not None:
                sel = sel[sel != skip_index[start + r]][:k]
            else:
                sel = sel[:k]
            idx_out[start + r] = sel
            dist_out[start + r] = np.sqrt(row[sel])
    return idx_out, dist_out


def nearest_point(query: np.ndarray, points: np.ndarray) -> tuple[int, float]:
    """Single nearest neighbor, ties to the lower index."""
    idx, dist = knn_points(np.asarray(query, dtype=np.float64)[None, :], points, 1)
    return int(idx[0, 0]), float(dist[0, 0])
