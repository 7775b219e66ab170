"""Attentive point segmentation network.

Per point, the aggregation block encodes each of its K nearest neighbors as
the 10-vector (p, p_k, p - p_k, ||p - p_k||), lifts that through a shared MLP,
concatenates the lifted geometry with the neighbor's feature vector, and pools
the K rows with per-channel softmax attention.  Two such units chained inside
a residual block extend a point's reach to its two-hop neighborhood.  The full
model is a four-level encoder-decoder: each encoder level aggregates and then
randomly keeps a quarter of its points, each decoder level copies features
from the nearest surviving point and fuses them with the skip connection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import numeric
from .numeric import Tensor
from .pointcloud import PointCloud
from .rng import Rng
from .sampling import farthest_point_sample
from .spatial import NeighborIndex, build_index, knn, nearest

__all__ = [
    "NetworkConfig", "ModelParams", "LayerState", "init_params",
    "spatial_encoding", "locse", "attentive_pool", "neighborhood_pool",
    "dilated_residual_block", "encoder_layer", "decoder_layer", "forward",
    "export_attention", "attention_entropy", "LOCSE_MODES", "POOLING_MODES",
]

# pieces of the relative-position encoding selected by each mode
LOCSE_MODES: Dict[str, Tuple[str, ...]] = {
    "full": ("p", "pk", "rel", "dist"),
    "p_only": ("p",),
    "pk_only": ("pk",),
    "rel_only": ("rel",),
    "dist_only": ("dist",),
    "p_pk": ("p", "pk"),
    "p_pk_rel": ("p", "pk", "rel"),
    "p_pk_dist": ("p", "pk", "dist"),
    "rel_dist": ("rel", "dist"),
}
_PIECE_WIDTH = {"p": 3, "pk": 3, "rel": 3, "dist": 1}

POOLING_MODES = ("attentive", "max", "mean", "sum")


@dataclass(frozen=True)
class NetworkConfig:
    n_class: int
    d_in: int = 6
    k: int = 16
    channels: Tuple[int, ...] = (8, 32, 128, 256, 512)  # input width, then per-level output widths
    block_depth: int = 2
    locse_mode: str = "full"
    pooling: str = "attentive"
    dropout: float = 0.5
    head_widths: Tuple[int, ...] = (64, 32)
    # crop coordinates are divided by this before entering the network; keeps
    # activations O(1) so the fixed 0.01 learning rate stays stable without
    # normalization layers
    coord_scale: float = 4.0

    def __post_init__(self):
        if self.locse_mode not in LOCSE_MODES:
            raise ValueError(f"unknown locse_mode {self.locse_mode!r}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.block_depth < 1:
            raise ValueError("block_depth must be >= 1")
        if len(self.channels) < 2:
            raise ValueError("channels needs an input width and at least one level")

    @property
    def n_layers(self) -> int:
        return len(self.channels) - 1

    def locse_width(self) -> int:
        return sum(_PIECE_WIDTH[p] for p in LOCSE_MODES[self.locse_mode])

    def unit_widths(self, level: int) -> List[int]:
        """Feature width entering each aggregation unit; doubles per unit."""
        base = max(1, self.channels[level + 1] // 4)
        return [base * (2 ** u) for u in range(self.block_depth)]


class ModelParams:
    """Named weight tensors plus the architecture hyperparameters."""

    def __init__(self, config: NetworkConfig, tensors: Dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> List[Tuple[str, Tensor]]:
        return sorted(self.tensors.items())

    def trainable(self) -> List[Tensor]:
        return [t for _, t in self.named()]

    def zero_grads(self) -> None:
        numeric.zero_grads(self.trainable())


def _glorot(rng: Rng, din: int, dout: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (din + dout))
    return (rng.uniforms((din, dout)) * 2.0 - 1.0) * bound


def init_params(config: NetworkConfig, rng: Rng) -> ModelParams:
    """Seeded fan-based uniform weights, zero biases, in fixed name order."""
    shapes: List[Tuple[str, int, int, bool]] = []  # (name, din, dout, has_bias)

    def mlp(name, din, dout, bias=True):
        shapes.append((name, din, dout, bias))

    mlp("input", config.d_in, config.channels[0])
    w_loc = config.locse_width()
    for level in range(config.n_layers):
        c_in = config.channels[level]
        c_out = config.channels[level + 1]
        widths = config.unit_widths(level)
        mlp(f"enc{level}.reduce", c_in, widths[0])
        for u, d in enumerate(widths):
            mlp(f"enc{level}.u{u}.locse", w_loc, d)
            mlp(f"enc{level}.u{u}.score", 2 * d, 2 * d, bias=False)
            mlp(f"enc{level}.u{u}.post", 2 * d, 2 * d)
        mlp(f"enc{level}.expand", 2 * widths[-1], c_out)
        mlp(f"enc{level}.shortcut", c_in, c_out)
    for level in range(config.n_layers):
        mlp(f"dec{level}", 2 * config.channels[level + 1], config.channels[level])
    head_in = config.channels[0]
    for i, w in enumerate(config.head_widths):
        mlp(f"head.fc{i}", head_in, w)
        head_in = w
    mlp("head.logits", head_in, config.n_class)

    tensors: Dict[str, Tensor] = {}
    for name, din, dout, bias in sorted(shapes):
        tensors[name + ".W"] = Tensor(_glorot(rng, din, dout), requires_grad=True)
        if bias:
            tensors[name + ".b"] = Tensor(np.zeros(dout), requires_grad=True)
    return ModelParams(config, tensors)


# ---------------------------------------------------------------------------
# Aggregation units
# ---------------------------------------------------------------------------

def spatial_encoding(coords: np.ndarray, neighbor_idx: np.ndarray, mode: str = "full") -> np.ndarray:
    """Per-neighbor geometric vector: selected pieces of (p, p_k, p-p_k, ||p-p_k||)."""
    p = coords[:, None, :]                      # (N, 1, 3)
    pk = coords[neighbor_idx]                   # (N, K, 3)
    rel = p - pk
    pieces = {
        "p": np.broadcast_to(p, pk.shape),
        "pk": pk,
        "rel": rel,
        "dist": np.linalg.norm(rel, axis=2, keepdims=True),
    }
    return np.concatenate([pieces[name] for name in LOCSE_MODES[mode]], axis=2)


def locse(coords: np.ndarray, features: Tensor, neighbors: NeighborIndex,
          w_spatial: Tensor, b_spatial: Tensor, mode: str = "full",
          w_align: Optional[Tensor] = None, b_align: Optional[Tensor] = None) -> Tensor:
    """Local spatial encoding: (N, D) features -> (N, K, 2D') augmented rows.

    The geometric vectors pass through a shared MLP to width D'; neighbor
    features are gathered (and mapped to D' by the optional align MLP when
    their width differs) and concatenated with the lifted geometry.
    """
    enc = spatial_encoding(coords, neighbors.indices, mode)
    r = numeric.leaky_relu(numeric.affine(Tensor(enc), w_spatial, b_spatial))
    d_prime = w_spatial.data.shape[1]
    feats = features
    if features.data.shape[1] != d_prime:
        if w_align is None or b_align is None:
            raise ValueError("feature width differs from encoding width and no align MLP given")
        feats = numeric.leaky_relu(numeric.affine(features, w_align, b_align))
    gathered = numeric.gather_rows(feats, neighbors.indices)
    return numeric.concat_last_axis([r, gathered])


def attentive_pool(fhat: Tensor, w_score: Tensor, w_post: Tensor, b_post: Tensor,
                   capture: Optional[list] = None) -> Tensor:
    """Per-channel softmax attention over the K axis, then a shared MLP.

    Scores come from a bias-free shared map of each augmented row; each
    channel's K scores sum to one and weight the summation.
    """
    scores = numeric.softmax_over_axis(numeric.matvec(fhat, w_score), axis=1)
    if capture is not None:
        capture.append(scores.data)
    pooled = numeric.reduce_sum_axis(numeric.elementwise_mul(fhat, scores), axis=1)
    return numeric.leaky_relu(numeric.affine(pooled, w_post, b_post))


def neighborhood_pool(fhat: Tensor, mode: str, w_score: Tensor, w_post: Tensor,
                      b_post: Tensor, capture: Optional[list] = None) -> Tensor:
    if mode == "attentive":
        return attentive_pool(fhat, w_score, w_post, b_post, capture)
    if mode == "max":
        pooled = numeric.reduce_max_axis(fhat, axis=1)
    elif mode == "mean":
        pooled = numeric.scale(numeric.reduce_sum_axis(fhat, axis=1), 1.0 / fhat.data.shape[1])
    elif mode == "sum":
        pooled = numeric.reduce_sum_axis(fhat, axis=1)
    else:
        raise ValueError(f"unknown pooling {mode!r}")
    return numeric.leaky_relu(numeric.affine(pooled, w_post, b_post))


def dilated_residual_block(coords: np.ndarray, features: Tensor, neighbors: NeighborIndex,
                           params: ModelParams, level: int,
                           capture: Optional[Dict[int, list]] = None) -> Tensor:
    """Reduce -> (LocSE -> pool) x depth -> expand, plus a shortcut map."""
    cfg = params.config
    p = params
    cap = None
    if capture is not None:
        cap = capture.setdefault(level, [])
    x = numeric.leaky_relu(numeric.affine(features, p[f"enc{level}.reduce.W"], p[f"enc{level}.reduce.b"]))
    for u in range(cfg.block_depth):
        fhat = locse(coords, x, neighbors,
                     p[f"enc{level}.u{u}.locse.W"], p[f"enc{level}.u{u}.locse.b"],
                     mode=cfg.locse_mode)
        x = neighborhood_pool(fhat, cfg.pooling, p[f"enc{level}.u{u}.score.W"],
                              p[f"enc{level}.u{u}.post.W"], p[f"enc{level}.u{u}.post.b"],
                              capture=cap)
    expanded = numeric.affine(x, p[f"enc{level}.expand.W"], p[f"enc{level}.expand.b"])
    shortcut = numeric.affine(features, p[f"enc{level}.shortcut.W"], p[f"enc{level}.shortcut.b"])
    return numeric.leaky_relu(numeric.add(expanded, shortcut))


# ---------------------------------------------------------------------------
# Encoder / decoder
# ---------------------------------------------------------------------------

@dataclass
class LayerState:
    coords: np.ndarray
    features: Tensor
    neighbor_index: Optional[NeighborIndex] = None
    kept_indices: Optional[np.ndarray] = None  # mapping into the previous layer


def _neighbors_for(coords: np.ndarray, k: int) -> NeighborIndex:
    k_eff = min(k, coords.shape[0])
    return knn(build_index(coords), coords, k_eff)


def _sample_indices(coords: np.ndarray, m: int, sampler: str, rng: Optional[Rng]) -> np.ndarray:
    if sampler == "random":
        if rng is None:
            raise ValueError("random decimation needs an rng")
        return rng.sample_indices(coords.shape[0], m)
    if sampler == "fps":
        # order-free deterministic start: the point farthest from the centroid
        start = int(np.argmax(((coords - coords.mean(axis=0)) ** 2).sum(axis=1)))
        return farthest_point_sample(coords, m, start_index=start)
    raise ValueError(f"unknown sampler {sampler!r}")


def encoder_layer(state: LayerState, params: ModelParams, level: int,
                  rng: Optional[Rng], sampler: str = "random",
                  capture: Optional[Dict[int, list]] = None) -> Tuple[LayerState, LayerState]:
    """Aggregate, then keep ceil(N/4) points; returns (pre-sample, post-sample) states."""
    cfg = params.config
    if state.neighbor_index is None:
        state.neighbor_index = _neighbors_for(state.coords, cfg.k)
    block_out = dilated_residual_block(state.coords, state.features, state.neighbor_index,
                                       params, level, capture)
    full = LayerState(coords=state.coords, features=block_out,
                      neighbor_index=state.neighbor_index, kept_indices=state.kept_indices)
    n = state.coords.shape[0]
    m = (n + 3) // 4
    keep = _sample_indices(state.coords, m, sampler, rng)
    sub_coords = state.coords[keep]
    sub_feats = numeric.reshape(numeric.gather_rows(block_out, keep.reshape(-1, 1)),
                                (m, block_out.data.shape[1]))
    sampled = LayerState(coords=sub_coords, features=sub_feats,
                         neighbor_index=_neighbors_for(sub_coords, cfg.k), kept_indices=keep)
    return full, sampled


def decoder_layer(state: LayerState, skip: LayerState, params: ModelParams, level: int) -> LayerState:
    """Copy each skip point's nearest coarse feature, fuse with the skip feature."""
    p = params
    ids = nearest(build_index(state.coords), skip.coords)
    up = numeric.reshape(numeric.gather_rows(state.features, ids.reshape(-1, 1)),
                         (skip.coords.shape[0], state.features.data.shape[1]))
    cat = numeric.concat_last_axis([up, skip.features])
    feats = numeric.leaky_relu(numeric.affine(cat, p[f"dec{level}.W"], p[f"dec{level}.b"]))
    return LayerState(coords=skip.coords, features=feats)


def forward(cloud: PointCloud, params: ModelParams, mode: str = "eval",
            rng: Optional[Rng] = None, sampler: str = "random",
            capture: Optional[Dict[int, list]] = None,
            return_trace: bool = False):
    """Logits (N, n_class) for every input point.

    `mode="train"` enables dropout; decimation draws from `rng` (required for
    the default random sampler).  With `return_trace=True` also returns the
    per-level states for shape inspection.
    """
    cfg = params.config
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    feats_in = cloud.features()
    if feats_in.shape[1] != cfg.d_in:
        raise ValueError(f"cloud supplies d_in={feats_in.shape[1]}, model expects {cfg.d_in}")
    x = numeric.leaky_relu(numeric.affine(Tensor(feats_in), params["input.W"], params["input.b"]))
    state = LayerState(coords=cloud.coords, features=x,
                       neighbor_index=_neighbors_for(cloud.coords, cfg.k))
    skips: List[LayerState] = []
    encoded: List[LayerState] = []
    for level in range(cfg.n_layers):
        full, state = encoder_layer(state, params, level, rng, sampler, capture)
        skips.append(full)
        encoded.append(state)
    for level in reversed(range(cfg.n_layers)):
        state = decoder_layer(state, skips[level], params, level)
    h = state.features
    for i in range(len(cfg.head_widths)):
        h = numeric.leaky_relu(numeric.affine(h, params[f"head.fc{i}.W"], params[f"head.fc{i}.b"]))
    h = numeric.dropout(h, cfg.dropout, train=(mode == "train"), rng=rng)
    logits = numeric.affine(h, params["head.logits.W"], params["head.logits.b"])
    if return_trace:
        return logits, {"skips": skips, "encoded": encoded}
    return logits


# ---------------------------------------------------------------------------
# Attention inspection
# ---------------------------------------------------------------------------

def export_attention(cloud: PointCloud, params: ModelParams, layer: int,
                     point_ids: Optional[np.ndarray] = None,
                     path: Optional[str] = None, rng: Optional[Rng] = None,
                     unit: int = 0) -> Dict[int, np.ndarray]:
    """K x C attention score matrix per probed point of one encoder level.

    Point ids refer to the points alive at that level (level 0 = the input
    order).  Each channel's scores sum to one.  With `path` given, rows are
    appended as ``point_id,layer,k,channel,score`` CSV.
    """
    cfg = params.config
    if not 0 <= layer < cfg.n_layers:
        raise ValueError(f"layer must be in [0, {cfg.n_layers})")
    capture: Dict[int, list] = {}
    forward(cloud, params, mode="eval", rng=rng if rng is not None else Rng(0),
            sampler="random" if rng is not None else "fps", capture=capture)
    scores = capture[layer][unit]  # (N_layer, K, C)
    if point_ids is None:
        point_ids = np.arange(scores.shape[0])
    point_ids = np.asarray(point_ids, dtype=np.int64)
    out = {int(i): scores[i] for i in point_ids}
    if path is not None:
        with open(path, "w") as fh:
            fh.write("point_id,layer,k,channel,score\n")
            for i in point_ids:
                mat = scores[i]
                for kk in range(mat.shape[0]):
                    for ch in range(mat.shape[1]):
                        fh.write(f"{int(i)},{layer},{kk},{ch},{mat[kk, ch]:.17g}\n")
    return out


def attention_entropy(score_matrix: np.ndarray) -> float:
    """Mean per-channel entropy (nats) of a (K, C) or (N, K, C) score array."""
    s = np.clip(score_matrix, 1e-300, 1.0)
    return float(-(s * np.log(s)).sum(axis=-2).mean())
