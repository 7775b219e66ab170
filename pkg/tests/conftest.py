import numpy as np
import pytest

from randla.rng import Rng


@pytest.fixture
def rng():
    return Rng(20240615)


def brute_knn(coords: np.ndarray, queries: np.ndarray, k: int,
              exclude_ids=None) -> tuple[np.ndarray, np.ndarray]:
    """O(QN) reference: rows sorted by (distance, index)."""
    n = coords.shape[0]
    idx = np.empty((queries.shape[0], k), dtype=np.int64)
    dist = np.empty((queries.shape[0], k))
    for i, q in enumerate(queries):
        d = np.linalg.norm(coords - q, axis=1)
        order = np.lexsort((np.arange(n), d))
        if exclude_ids is not None:
            order = order[order != exclude_ids[i]]
        idx[i] = order[:k]
        dist[i] = d[idx[i]]
    return idx, dist


def pairwise_min_distance(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return np.inf
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return float(d[~np.eye(points.shape[0], dtype=bool)].min())
