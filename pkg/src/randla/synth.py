"""Synthetic labeled scenes: a ground plane scattered with spheres and boxes.

Class 0 is the ground plane, class 1 sphere surfaces, class 2 box surfaces.
Points are sampled uniformly by surface area, jittered with Gaussian noise
(sigma = 0.01 m), and colored with a noisy per-class palette.  Everything is
a pure function of the seed, so regenerated files are byte-identical.
"""

from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np

from .pointcloud import PointCloud, save_cloud
from .rng import Rng

__all__ = ["generate_scene", "generate_dataset", "SCENE_KINDS", "CLASS_NAMES"]

SCENE_KINDS = ("planes-spheres-boxes",)
CLASS_NAMES = ["ground", "sphere", "box"]

_EXTENT = 6.0
_NOISE = 0.01
_PALETTE = np.array([[0.45, 0.45, 0.45],   # ground
                     [0.70, 0.25, 0.20],   # spheres
                     [0.20, 0.30, 0.70]])  # boxes


def _sphere_surface(rng: Rng, n: int, center: np.ndarray, radius: float) -> np.ndarray:
    d = rng.normals((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return center + radius * d


def _box_surface(rng: Rng, n: int, center: np.ndarray, half: np.ndarray, yaw: float) -> np.ndarray:
    # pick faces proportional to their area, then sample uniformly on the face
    hx, hy, hz = half
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    cdf = np.cumsum(areas / areas.sum())
    u = rng.uniforms((n,))
    faces = np.searchsorted(cdf, u, side="right").clip(0, 5)
    a = rng.uniforms((n,)) * 2.0 - 1.0
    b = rng.uniforms((n,)) * 2.0 - 1.0
    pts = np.empty((n, 3))
    for f in range(6):
        sel = faces == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [d for d in range(3) if d != axis]
        pts[sel, axis] = sign * half[axis]
        pts[sel, others[0]] = a[sel] * half[others[0]]
        pts[sel, others[1]] = b[sel] * half[others[1]]
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return pts @ rot.T + center


def generate_scene(n_points: int, rng: Rng) -> PointCloud:
    """One labeled scene with n_points points covering all three classes."""
    if n_points < 30:
        raise ValueError("a scene needs at least 30 points")
    spheres = []
    for _ in range(1 + rng.below(2)):
        # boulders: locally plane-like surfaces that only orientation and
        # elevation can separate from the ground
        radius = 1.2 + 0.6 * rng.uniform()
        cx = 1.5 + (_EXTENT - 3.0) * rng.uniform()
        cy = 1.5 + (_EXTENT - 3.0) * rng.uniform()
        spheres.append((np.array([cx, cy, radius]), radius))
    for _ in range(2 + rng.below(2)):
        radius = 0.35 + 0.45 * rng.uniform()
        cx = 1.0 + (_EXTENT - 2.0) * rng.uniform()
        cy = 1.0 + (_EXTENT - 2.0) * rng.uniform()
        spheres.append((np.array([cx, cy, radius]), radius))
    boxes = []
    for _ in range(3 + rng.below(3)):
        half = 0.25 + 0.35 * rng.uniforms((3,))
        cx = 1.0 + (_EXTENT - 2.0) * rng.uniform()
        cy = 1.0 + (_EXTENT - 2.0) * rng.uniform()
        yaw = 2.0 * np.pi * rng.uniform()
        boxes.append((np.array([cx, cy, half[2]]), half, yaw))

    areas = [_EXTENT * _EXTENT]
    areas += [4.0 * np.pi * r * r for _, r in spheres]
    areas += [8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]) for _, h, _ in boxes]
    shares = np.asarray(areas) / sum(areas)
    counts = np.maximum(4, np.round(shares * n_points).astype(int))
    counts[0] += n_points - counts.sum()  # balance the rounding on the plane

    parts: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    xy = rng.uniforms((counts[0], 2)) * _EXTENT
    parts.append(np.column_stack([xy, np.zeros(counts[0])]))
    labels.append(np.zeros(counts[0], dtype=np.int64))
    pos = 1
    for center, radius in spheres:
        parts.append(_sphere_surface(rng, counts[pos], center, radius))
        labels.append(np.ones(counts[pos], dtype=np.int64))
        pos += 1
    for center, half, yaw in boxes:
        parts.append(_box_surface(rng, counts[pos], center, half, yaw))
        labels.append(np.full(counts[pos], 2, dtype=np.int64))
        pos += 1

    coords = np.vstack(parts) + _NOISE * rng.normals((n_points, 3))
    label_arr = np.concatenate(labels)
    # heavy color noise: appearance hints at the class but cannot decide it
    colors = _PALETTE[label_arr] + 0.25 * (rng.uniforms((n_points, 3)) * 2.0 - 1.0)
    order = rng.permutation(n_points)  # shuffle so crops are not class-sorted runs
    return PointCloud(coords=coords[order], colors=np.clip(colors[order], 0.0, 1.0),
                      labels=label_arr[order], n_class=3)


def generate_dataset(out_dir: str, n_clouds: int, n_points: int, seed: int,
                     kind: str = "planes-spheres-boxes") -> List[str]:
    """Write n_clouds xyzrgbl scenes into out_dir; returns the file paths."""
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = Rng(seed)
    paths = []
    for i in range(n_clouds):
        cloud = generate_scene(n_points, master.child(i))
        path = out / f"scene_{i:03d}.txt"
        save_cloud(str(path), cloud, "xyzrgbl-text")
        paths.append(str(path))
    return paths
