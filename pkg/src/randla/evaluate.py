"""Confusion-matrix metrics and overlapping sub-cloud voting inference.

Rows of the confusion matrix are ground truth, columns are predictions.
Classes absent from both rows and columns are excluded from the mean scores.
Voting inference repeatedly crops around the currently least-visited point,
accumulates softmax probabilities per point, and stops once every point has
been inferred at least `min_votes` times; labels are the argmax of the
accumulated probabilities with ties going to the smaller class id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .network import ModelParams, forward
from .pointcloud import PointCloud, crop_subcloud
from .rng import Rng
from .spatial import build_index
from .train import recentered

__all__ = ["ConfusionMatrix", "confusion_matrix", "metrics", "vote_infer",
           "format_report", "report_json"]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows = ground truth, cols = prediction

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, n_class: int) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError("pred and gt must be equal-length flat arrays")
    if pred.size:
        if pred.min() < 0 or pred.max() >= n_class:
            raise ValueError("prediction outside [0, n_class)")
        if gt.min() < 0 or gt.max() >= n_class:
            raise ValueError("ground truth outside [0, n_class)")
    counts = np.bincount(gt * n_class + pred, minlength=n_class * n_class)
    return ConfusionMatrix(counts.reshape(n_class, n_class))


def metrics(cm: ConfusionMatrix) -> Dict[str, object]:
    """OA, mean per-class recall, mean IoU, and per-class IoU.

    IoU_c = cm[c,c] / (row_c + col_c - cm[c,c]); classes with empty row and
    column are reported as NaN and excluded from the means.
    """
    counts = cm.counts.astype(np.float64)
    c = counts.shape[0]
    diag = np.diag(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    active = (rows + cols) > 0
    iou = np.full(c, np.nan)
    recall = np.full(c, np.nan)
    union = rows + cols - diag
    iou[active] = diag[active] / union[active]
    seen = rows > 0
    recall[seen] = diag[seen] / rows[seen]
    total = counts.sum()
    return {
        "oa": float(diag.sum() / total) if total > 0 else float("nan"),
        "macc": float(np.nanmean(recall)) if seen.any() else float("nan"),
        "miou": float(np.nanmean(iou[active])) if active.any() else float("nan"),
        "iou": iou,
    }


def vote_infer(params: ModelParams, cloud: PointCloud, crop_size: int,
               min_votes: int, rng: Rng) -> np.ndarray:
    """Predicted label per point from overlapping crop passes.

    Crops larger than the cloud degrade to single full-cloud passes.  The
    accumulator sums softmax probabilities, so overlapping passes vote with
    their confidence rather than with hard labels.
    """
    if crop_size < 1 or min_votes < 1:
        raise ValueError("crop_size and min_votes must be >= 1")
    n = cloud.n
    n_class = params.config.n_class
    count = min(crop_size, n)
    index = build_index(cloud.coords)
    probs = np.zeros((n, n_class))
    visits = np.zeros(n, dtype=np.int64)
    max_passes = min_votes * n + 1  # every pass lifts the least-visited point
    for _ in range(max_passes):
        if visits.min() >= min_votes:
            break
        center = int(np.argmin(visits))
        idx = crop_subcloud(cloud, center, count, index)
        sub = recentered(cloud, idx, params.config.coord_scale)
        logits = forward(sub, params, mode="eval", rng=rng).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs[idx] += e / e.sum(axis=1, keepdims=True)
        visits[idx] += 1
    else:
        raise RuntimeError("voting failed to cover every point within the pass budget")
    return probs.argmax(axis=1)


def format_report(result: Dict[str, object], class_names: Optional[list] = None) -> str:
    """Fixed-format score table, percentages with two decimals."""
    iou = result["iou"]
    lines = []
    for c, value in enumerate(iou):
        name = class_names[c] if class_names else f"class {c}"
        shown = "   excluded" if np.isnan(value) else f"{100.0 * value:10.2f}"
        lines.append(f"IoU {name:<12} {shown}")
    lines.append(f"OA   {100.0 * result['oa']:10.2f}")
    lines.append(f"mAcc {100.0 * result['macc']:10.2f}")
    lines.append(f"mIoU {100.0 * result['miou']:10.2f}")
    return "\n".join(lines)


def report_json(result: Dict[str, object]) -> str:
    payload = {
        "oa": result["oa"],
        "macc": result["macc"],
        "miou": result["miou"],
        "iou": [None if np.isnan(v) else float(v) for v in result["iou"]],
    }
    return json.dumps(payload, indent=2)
