"""Finite-difference verification battery over the autodiff stack.

Checks every primitive and every network building block against central
differences, from single ops up to a full forward pass with the weighted
cross-entropy loss on a 64-point cloud.  Smooth primitives must agree to
1e-6; anything containing leaky-ReLU kinks (inputs are kept away from zero
for the primitive check) or deep composition to 1e-4.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from . import network, numeric
from .numeric import Tensor, gradient_check
from .pointcloud import PointCloud
from .rng import Rng
from .spatial import build_index, knn
from .train import class_weights, cross_entropy_node

__all__ = ["run_battery", "SMOOTH_BOUND", "COMPOSITE_BOUND"]

SMOOTH_BOUND = 1e-6
COMPOSITE_BOUND = 1e-4


def _scalarize(t: Tensor, weights: np.ndarray) -> Tensor:
    """Weighted sum to a 0-d tensor so every output entry affects the loss."""
    flat = numeric.reshape(numeric.elementwise_mul(t, Tensor(weights)), (-1,))
    return numeric.reduce_sum_axis(flat, axis=0)


def _uniform(rng: Rng, shape, lo=-1.0, hi=1.0) -> np.ndarray:
    return rng.uniforms(shape) * (hi - lo) + lo


def run_battery(seed: int = 7) -> List[Tuple[str, float, float]]:
    rng = Rng(seed)
    results: List[Tuple[str, float, float]] = []

    mix = _uniform(rng, (4, 3))
    results.append(("affine", gradient_check(
        lambda x, w, b: _scalarize(numeric.affine(x, w, b), mix),
        [Tensor(_uniform(rng, (4, 5))), Tensor(_uniform(rng, (5, 3))), Tensor(_uniform(rng, (3,)))],
    ), SMOOTH_BOUND))

    x = _uniform(rng, (6, 5))
    x += np.where(x >= 0, 1e-3, -1e-3)  # keep 1e-3 clear of the kink
    relu_mix = _uniform(rng, (6, 5))
    results.append(("leaky_relu", gradient_check(
        lambda t: _scalarize(numeric.leaky_relu(t), relu_mix),
        [Tensor(x)],
    ), SMOOTH_BOUND))

    sm_mix = _uniform(rng, (3, 5, 4))
    results.append(("softmax_over_axis", gradient_check(
        lambda t: _scalarize(numeric.softmax_over_axis(t, axis=1), sm_mix),
        [Tensor(_uniform(rng, (3, 5, 4), -2.0, 2.0))],
    ), SMOOTH_BOUND))

    idx = rng.integers(10, 12).reshape(4, 3)
    gather_mix = _uniform(rng, (4, 3, 5))
    results.append(("gather_rows", gradient_check(
        lambda t: _scalarize(numeric.gather_rows(t, idx), gather_mix),
        [Tensor(_uniform(rng, (10, 5)))],
    ), SMOOTH_BOUND))

    coords = _uniform(rng, (12, 3), 0.0, 2.0)
    neighbors = knn(build_index(coords), coords, 4)
    locse_mix = _uniform(rng, (12, 4, 12))
    results.append(("locse", gradient_check(
        lambda f, w, b: _scalarize(network.locse(coords, f, neighbors, w, b), locse_mix),
        [Tensor(_uniform(rng, (12, 6))), Tensor(_uniform(rng, (10, 6))), Tensor(_uniform(rng, (6,)))],
    ), COMPOSITE_BOUND))

    pool_mix = _uniform(rng, (6, 8))
    results.append(("attentive_pool", gradient_check(
        lambda f, ws, wp, bp: _scalarize(network.attentive_pool(f, ws, wp, bp), pool_mix),
        [Tensor(_uniform(rng, (6, 4, 8))), Tensor(_uniform(rng, (8, 8))),
         Tensor(_uniform(rng, (8, 8))), Tensor(_uniform(rng, (8,)))],
    ), COMPOSITE_BOUND))

    cfg_block = network.NetworkConfig(n_class=2, d_in=3, k=4, channels=(6, 16))
    block_params = network.init_params(cfg_block, rng.child(1))
    bcoords = _uniform(rng, (16, 3), 0.0, 2.0)
    bneigh = knn(build_index(bcoords), bcoords, 4)
    bfeat = Tensor(_uniform(rng, (16, 6)))
    bmix = _uniform(rng, (16, 16))
    block_inputs = [bfeat] + [t for name, t in block_params.named() if name.startswith("enc0.")]

    def block_loss(*_):
        out = network.dilated_residual_block(bcoords, bfeat, bneigh, block_params, 0)
        return _scalarize(out, bmix)

    results.append(("dilated_residual_block", gradient_check(block_loss, block_inputs),
                    COMPOSITE_BOUND))

    cloud_rng = rng.child(2)
    ccoords = _uniform(cloud_rng, (64, 3), 0.0, 4.0)
    labels = cloud_rng.integers(3, 64)
    cloud = PointCloud(coords=ccoords, labels=labels, n_class=3)
    net_cfg = network.NetworkConfig(n_class=3, d_in=3)
    params = network.init_params(net_cfg, rng.child(3))
    weights = class_weights(np.bincount(labels, minlength=3))

    def net_loss(*_):
        logits = network.forward(cloud, params, mode="eval", sampler="fps")
        return cross_entropy_node(logits, labels, weights)

    results.append(("forward_weighted_ce", gradient_check(
        net_loss, params.trainable(), probe_limit=3), COMPOSITE_BOUND))
    return results
