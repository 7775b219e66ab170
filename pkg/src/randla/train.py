"""Loss, class weighting, Adam, and the crop-based training loop.

Class weights are inverse label frequencies over the training split,
normalized to mean one over the classes that occur; classes that never occur
get weight zero and drop out of the loss.  Optimization is plain Adam with an
initial rate of 0.01 decayed by 5% after every epoch.  Training crops a fixed
number of nearest points around a seeded random center per step; the random
cropping plus the network's own random decimation is the only augmentation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import checkpoint
from .network import ModelParams, NetworkConfig, forward, init_params
from .numeric import Tensor
from .pointcloud import PointCloud, crop_subcloud, load_cloud
from .rng import Rng
from .spatial import build_index

__all__ = [
    "TrainConfig", "AdamState", "class_weights", "weighted_cross_entropy",
    "adam_step", "train_loop", "parse_train_config", "EpochStats",
]


@dataclass
class TrainConfig:
    seed: int
    n_class: int
    epochs: int = 100
    lr0: float = 0.01
    lr_decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    points_per_crop: int = 512
    crops_per_epoch: int = 8

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if not 0.0 < self.lr_decay < 1.0:
            raise ValueError("lr_decay must be in (0, 1)")
        if self.epochs < 1 or self.points_per_crop < 1 or self.crops_per_epoch < 1:
            raise ValueError("epochs, points_per_crop and crops_per_epoch must be >= 1")
        if self.n_class < 2:
            raise ValueError("n_class must be >= 2")


_INT_KEYS = {"seed", "n_class", "epochs", "points_per_crop", "crops_per_epoch"}
_FLOAT_KEYS = {"lr0", "lr_decay", "beta1", "beta2", "eps"}


def parse_train_config(path: str, overrides: Optional[Dict[str, str]] = None) -> TrainConfig:
    """``key = value`` lines; '#' starts a comment; unknown keys are rejected."""
    values: Dict[str, Union[int, float]] = {}

    def put(key: str, raw: str, where: str):
        key = key.strip()
        raw = raw.strip()
        if key in _INT_KEYS:
            values[key] = int(raw)
        elif key in _FLOAT_KEYS:
            values[key] = float(raw)
        else:
            raise ValueError(f"{where}: unknown config key {key!r}")

    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{ln}: expected 'key = value', got {line.strip()!r}")
            key, raw = stripped.split("=", 1)
            put(key, raw, f"{path}:{ln}")
    for key, raw in (overrides or {}).items():
        put(key, raw, "override")
    missing = [k for k in ("seed", "n_class") if k not in values]
    if missing:
        raise ValueError(f"{path}: missing required config keys: {', '.join(missing)}")
    return TrainConfig(**values)


def class_weights(label_counts: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights, mean 1 over occurring classes, 0 elsewhere."""
    counts = np.asarray(label_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("all label counts are zero")
    present = counts > 0
    w = np.zeros_like(counts)
    w[present] = total / counts[present]
    w[present] /= w[present].mean()
    return w


def weighted_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                           weights: np.ndarray) -> Tuple[float, np.ndarray]:
    """Per-point weighted negative log-likelihood and its exact logits gradient.

    loss = sum_i w[y_i] * (-log softmax(logits_i)[y_i]) / sum_i w[y_i]
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    n, c = logits.shape
    if labels.shape != (n,) or weights.shape != (c,):
        raise ValueError("shape mismatch between logits, labels, weights")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    prob = exp / exp.sum(axis=1, keepdims=True)
    w = weights[labels]
    w_total = w.sum()
    if w_total <= 0:
        raise ValueError("every point in the batch carries zero class weight")
    nll = -(shifted[np.arange(n), labels] - np.log(exp.sum(axis=1)))
    loss = float((w * nll).sum() / w_total)
    grad = prob * w[:, None]
    grad[np.arange(n), labels] -= w
    grad /= w_total
    return loss, grad


def cross_entropy_node(logits: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """Scalar loss tensor wired into the tape via the closed-form gradient."""
    loss, grad = weighted_cross_entropy(logits.data, labels, weights)
    out = Tensor(np.float64(loss))
    if logits.requires_grad or logits._parents:
        out.requires_grad = logits.requires_grad
        out._parents = (logits,)
        out._backward = lambda g: logits.accumulate(float(g) * grad)
    return out


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name, t in params.named():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state


def adam_step(params: ModelParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place, reading each tensor's .grad."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in params.named():
        grad = tensor.grad
        if grad is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        tensor.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss: float
    oa: float


def _load_dataset(items: Sequence[Union[str, Path, PointCloud]], n_class: int) -> List[PointCloud]:
    clouds: List[PointCloud] = []
    for item in items:
        if isinstance(item, PointCloud):
            clouds.append(item)
        else:
            clouds.append(load_cloud(str(item), "xyzrgbl-text", n_class=n_class))
    if not clouds:
        raise ValueError("empty training dataset")
    for i, cloud in enumerate(clouds):
        if cloud.labels is None:
            raise ValueError(f"training cloud {i} has no labels")
    return clouds


GRAD_CLIP_NORM = 5.0  # bounds the rare spiky steps; lr itself stays at the configured value


def recentered(cloud: PointCloud, idx: np.ndarray, coord_scale: float = 1.0) -> PointCloud:
    """Crop by index, shift to the crop centroid, divide by coord_scale."""
    sub = cloud.select(idx)
    return PointCloud(coords=(sub.coords - sub.coords.mean(axis=0)) / coord_scale,
                      colors=sub.colors, labels=sub.labels, n_class=sub.n_class)


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    total = 0.0
    for t in params.trainable():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    total = math.sqrt(total)
    if total > max_norm:
        factor = max_norm / total
        for t in params.trainable():
            if t.grad is not None:
                t.grad *= factor
    return total


def train_loop(dataset: Sequence[Union[str, Path, PointCloud]], cfg: TrainConfig,
               net: Optional[NetworkConfig] = None,
               checkpoint_path: Optional[str] = None,
               log_path: Optional[str] = None,
               progress: Optional[callable] = None) -> Tuple[ModelParams, List[EpochStats]]:
    """Crop -> forward -> weighted CE -> Adam, for cfg.epochs epochs.

    Fully deterministic given (dataset, cfg, seed): every random choice flows
    from one seeded stream.  Writes the final checkpoint and a per-epoch
    ``epoch,lr,loss,oa`` CSV when paths are given.
    """
    clouds = _load_dataset(dataset, cfg.n_class)
    d_in = clouds[0].d_in
    for i, cloud in enumerate(clouds):
        if cloud.d_in != d_in:
            raise ValueError(f"cloud {i} has d_in={cloud.d_in}, expected {d_in}")
    if net is None:
        net = NetworkConfig(n_class=cfg.n_class, d_in=d_in)
    elif net.d_in != d_in or net.n_class != cfg.n_class:
        raise ValueError("network config disagrees with dataset/train config")

    counts = np.zeros(cfg.n_class, dtype=np.int64)
    for cloud in clouds:
        counts += np.bincount(cloud.labels, minlength=cfg.n_class)
    weights = class_weights(counts)

    indexes = [build_index(c.coords) for c in clouds]
    rng = Rng(cfg.seed)
    params = init_params(net, rng.child(0))
    adam = AdamState.for_params(params)

    lr = cfg.lr0
    stats: List[EpochStats] = []
    for epoch in range(cfg.epochs):
        ep_rng = rng.child(epoch + 1)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for crop in range(cfg.crops_per_epoch):
            ci = ep_rng.below(len(clouds))
            cloud = clouds[ci]
            center = ep_rng.below(cloud.n)
            count = min(cfg.points_per_crop, cloud.n)
            idx = crop_subcloud(cloud, center, count, indexes[ci])
            sub = recentered(cloud, idx, net.coord_scale)
            params.zero_grads()
            logits = forward(sub, params, mode="train", rng=ep_rng)
            loss, grad = weighted_cross_entropy(logits.data, sub.labels, weights)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, crop {crop} "
                    f"(cloud {ci}, center {center}, step {adam.step + 1})")
            logits.backward(grad)
            clip_gradients(params, GRAD_CLIP_NORM)
            adam_step(params, adam, lr, cfg.beta1, cfg.beta2, cfg.eps)
            loss_sum += loss
            pred = logits.data.argmax(axis=1)
            correct += int((pred == sub.labels).sum())
            seen += sub.n
        stat = EpochStats(epoch=epoch, lr=lr, loss=loss_sum / cfg.crops_per_epoch,
                          oa=correct / seen)
        stats.append(stat)
        if progress is not None:
            progress(stat)
        lr *= cfg.lr_decay

    if checkpoint_path is not None:
        checkpoint.save_model(checkpoint_path, params)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "lr", "loss", "oa"])
            for s in stats:
                writer.writerow([s.epoch, f"{s.lr:.12g}", f"{s.loss:.12g}", f"{s.oa:.12g}"])
    return params, stats
