"""Point-sampling strategies: uniform random, farthest-point, inverse-density,
Poisson-disk, and the differentiable Gumbel-softmax relaxation.

All index-returning samplers are pure functions of (inputs, seed) and return
distinct, valid indices.  The soft sampler returns a feature vector instead
of indices and is differentiable through the autodiff core.
"""

from __future__ import annotations

from enum import Enum
from typing import Optional, Tuple

import numpy as np

from . import _kernels, numeric
from .rng import Rng
from .spatial import SpatialIndex, build_index, knn

__all__ = [
    "SamplerKind", "random_sample", "farthest_point_sample", "inverse_density_sample",
    "poisson_disk_sample", "pds_fit_radius", "crs_soft_sample", "crs_soft_sample_batch",
]


class SamplerKind(str, Enum):
    RS = "rs"
    FPS = "fps"
    IDIS = "idis"
    PDS = "pds"
    CRS = "crs"


def random_sample(n: int, m: int, rng: Rng) -> np.ndarray:
    """m distinct indices, uniform over all size-m subsets of range(n).

    Cost is O(m) for sparse draws, so the wall time does not grow with n.
    """
    if not 0 <= m <= n:
        raise ValueError(f"cannot sample {m} of {n} points")
    return rng.sample_indices(n, m)


def farthest_point_sample(coords: np.ndarray, m: int, start_index: int = 0) -> np.ndarray:
    """Greedy max-min coverage: each pick maximizes distance to the picked set."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"cannot sample {m} of {n} points")
    if not 0 <= start_index < n:
        raise ValueError("start_index out of range")
    return _kernels.farthest_point(coords, m, start_index)


def inverse_density_sample(coords: np.ndarray, m: int, t: int = 16,
                           index: Optional[SpatialIndex] = None) -> np.ndarray:
    """Keep the m points whose summed distance to their t nearest (non-self)
    neighbors is largest, i.e. the points sitting in the sparsest regions.
    Ties rank the smaller index first.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if t >= n:
        raise ValueError(f"t={t} must be smaller than the point count {n}")
    if not 0 <= m <= n:
        raise ValueError(f"cannot sample {m} of {n} points")
    if index is None:
        index = build_index(coords)
    neighbors = knn(index, coords, t, exclude_ids=np.arange(n, dtype=np.int64))
    density = neighbors.distances.sum(axis=1)
    order = np.lexsort((np.arange(n), -density))
    return order[:m]


def poisson_disk_sample(coords: np.ndarray, r: float, rng: Rng,
                        index: Optional[SpatialIndex] = None) -> np.ndarray:
    """Dart throwing over a seeded random permutation: a point is accepted iff
    no previously accepted point lies within r.  The accepted set therefore
    has minimum pairwise distance > r, and every rejected point is within r
    of some accepted point.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if r <= 0:
        raise ValueError("r must be > 0")
    order = rng.permutation(coords.shape[0])
    return _kernels.poisson_disk(coords, order, float(r))


def pds_fit_radius(coords: np.ndarray, target_m: int, rng: Rng,
                   tolerance: float = 0.1, max_iter: int = 32) -> Tuple[float, np.ndarray]:
    """Bisect the Poisson radius until the accepted count is within
    tolerance * target_m of target_m (or the iteration budget runs out).
    Dart order is re-drawn per trial from the supplied stream.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if not 1 <= target_m <= n:
        raise ValueError(f"target_m={target_m} out of range for {n} points")
    span = coords.max(axis=0) - coords.min(axis=0)
    r_lo = 0.0  # keeps everything
    r_hi = float(np.linalg.norm(span)) + 1.0  # keeps a single point
    best_r, best_idx, best_err = r_hi, None, np.inf
    for _ in range(max_iter):
        r = 0.5 * (r_lo + r_hi)
        idx = poisson_disk_sample(coords, r, rng)
        count = idx.shape[0]
        err = abs(count - target_m)
        if err < best_err:
            best_err, best_r, best_idx = err, r, idx
        if err <= tolerance * target_m:
            break
        if count > target_m:
            r_lo = r  # too many survivors: grow the exclusion radius
        else:
            r_hi = r
    return best_r, best_idx


def crs_soft_sample(features: numeric.Tensor, scores: numeric.Tensor,
                    gumbel: np.ndarray, tau: float) -> numeric.Tensor:
    """One Gumbel-softmax relaxed draw: y = sum_i softmax((log s_i + g_i)/tau) * P_i.

    Differentiable w.r.t. both the feature rows and the score vector; as tau
    shrinks the weights approach a one-hot draw with probabilities s.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    gumbel = np.asarray(gumbel, dtype=np.float64)
    if np.any(scores.data <= 0):
        raise ValueError("scores must be strictly positive")
    if scores.data.shape != gumbel.shape or scores.data.ndim != 1:
        raise ValueError("scores and gumbel must be equal-length vectors")
    if features.data.shape[0] != scores.data.shape[0]:
        raise ValueError("features and scores disagree on N")
    logits = numeric.scale(numeric.add(numeric.log(scores), numeric.Tensor(gumbel)), 1.0 / tau)
    weights = numeric.softmax_over_axis(logits, axis=0)
    weighted = numeric.elementwise_mul(features, _expand(weights, features.data.shape[1]))
    return numeric.reduce_sum_axis(weighted, axis=0)


def _expand(weights: numeric.Tensor, width: int) -> numeric.Tensor:
    # (N,) -> (N, 1); broadcasting inside elementwise_mul handles the rest
    data = weights.data.reshape(-1, 1)
    out = numeric.Tensor(data)
    out.requires_grad = weights.requires_grad
    if weights.requires_grad or weights._parents:
        out._parents = (weights,)
        out._backward = lambda grad: weights.accumulate(grad.reshape(weights.data.shape))
    return out


def crs_soft_sample_batch(features: np.ndarray, scores: np.ndarray,
                          gumbel: np.ndarray, tau: float) -> np.ndarray:
    """Vectorized forward-only relaxation: one soft point per gumbel row.

    Materializes the full (M, N) weight matrix, which is exactly the memory
    wall that makes this scheme impractical at large scale.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if np.any(scores <= 0):
        raise ValueError("scores must be strictly positive")
    logits = (np.log(scores)[None, :] + gumbel) / tau  # (M, N)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w @ features
