# -*- coding: utf-8 -*-
"""Overlap and surface distance metrics of label volumes.

Dice scores and HD95 are computed per foreground class. A class that is
missing from both masks has no Dice score, and a class missing from either
mask has no HD95; both are reported as None, never as 0.

Boundary voxels are mask voxels with at least one of their 6 face neighbours
outside the mask. Neighbours beyond the volume edge count as outside.
"""
import json
import logging

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.spatial import cKDTree

from ..errors import ContractViolation

logger = logging.getLogger(__name__)

SIX_NEIGHBOURHOOD = ndimage.generate_binary_structure(3, 1)


def _check_masks(pred_mask, truth_mask):
    pred_mask = np.asarray(pred_mask).astype(bool)
    truth_mask = np.asarray(truth_mask).astype(bool)
    if pred_mask.shape != truth_mask.shape:
        raise ContractViolation("mask shapes differ: %s vs %s" % (pred_mask.shape, truth_mask.shape))
    return pred_mask, truth_mask


def _check_spacing(spacing, ndim=3):
    spacing = np.asarray(spacing, dtype=np.float64)
    if spacing.shape != (ndim,) or not np.all(spacing > 0) or not np.all(np.isfinite(spacing)):
        raise ContractViolation("spacing must be %d positive values, got %s" % (ndim, spacing))
    return spacing


def scaled_distance(a, b, spacing):
    """Euclidean distance in mm between voxel index coordinates.

    `a` and `b` broadcast against each other, the last axis holds the 3
    coordinates. Every distance computation in this package goes through here.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dx = (a[..., 0] - b[..., 0])*spacing[0]
    dy = (a[..., 1] - b[..., 1])*spacing[1]
    dz = (a[..., 2] - b[..., 2])*spacing[2]
    return np.sqrt(dx*dx + dy*dy + dz*dz)


def dice_score(pred_mask, truth_mask):
    """2|A and B| / (|A| + |B|), None if both masks are empty."""
    pred_mask, truth_mask = _check_masks(pred_mask, truth_mask)
    total = int(pred_mask.sum()) + int(truth_mask.sum())
    if total == 0:
        return None
    return 2.*int(np.logical_and(pred_mask, truth_mask).sum())/total


def boundary_voxels(mask):
    """Boolean mask of the boundary voxels of `mask`."""
    mask = np.asarray(mask).astype(bool)
    interior = ndimage.binary_erosion(mask, structure=SIX_NEIGHBOURHOOD, border_value=0)
    return mask & ~interior


def directed_surface_distances(source_mask, target_mask, spacing=(1., 1., 1.)):
    """Distance from every boundary voxel of `source_mask` to the closest boundary voxel of `target_mask`."""
    spacing = _check_spacing(spacing)
    source = np.argwhere(boundary_voxels(source_mask))
    target = np.argwhere(boundary_voxels(target_mask))
    if len(source) == 0 or len(target) == 0:
        raise ContractViolation("surface distances need two nonempty masks")
    tree = cKDTree(target*spacing)
    nearest, _ = tree.query(source*spacing, k=1)
    # the tree only preselects; the final value is recomputed by scaled_distance among all near ties
    radius = nearest*(1 + 1e-9) + 1e-12
    candidates = tree.query_ball_point(source*spacing, r=radius)
    distances = np.empty(len(source))
    for i, points in enumerate(candidates):
        distances[i] = scaled_distance(source[i], target[points], spacing).min()
    return distances


def hd95(pred_mask, truth_mask, spacing=(1., 1., 1.), pooled=False, percentile=95.):
    """95th percentile Hausdorff distance in mm.

    Parameters:
    * pred_mask, truth_mask: boolean volumes of equal shape
    * spacing: voxel size in mm per axis
    * pooled: bool, percentile of the pooled distances of both directions instead of
              the maximum of the two directed percentiles
    * percentile: float, 95 by default, 100 gives the Hausdorff distance

    Returns:
    * float, or None if either mask is empty
    """
    pred_mask, truth_mask = _check_masks(pred_mask, truth_mask)
    if not pred_mask.any() or not truth_mask.any():
        return None
    forward = directed_surface_distances(pred_mask, truth_mask, spacing)
    backward = directed_surface_distances(truth_mask, pred_mask, spacing)
    if pooled:
        return float(np.percentile(np.concatenate([forward, backward]), percentile))
    return float(max(np.percentile(forward, percentile), np.percentile(backward, percentile)))


def hausdorff_distance(pred_mask, truth_mask, spacing=(1., 1., 1.)):
    """Symmetric Hausdorff distance between the mask boundaries, None if a mask is empty."""
    return hd95(pred_mask, truth_mask, spacing, percentile=100.)


class ClassMetrics(object):
    def __init__(self, class_id, dice, hd95):
        self.class_id = class_id
        self.dice = dice
        self.hd95 = hd95

    def to_dict(self):
        return {"class_id": self.class_id, "dice": self.dice, "hd95": self.hd95}


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


class MetricsReport(object):
    """Per-class Dice and HD95 of one prediction.

    Parameters:
    * per_class: list of ClassMetrics
    * foreground_only: bool, whether the background class was left out
    """
    def __init__(self, per_class, foreground_only=True):
        self.per_class = list(per_class)
        self.foreground_only = foreground_only

    @property
    def mean_dice(self):
        return _mean([c.dice for c in self.per_class])

    @property
    def mean_hd95(self):
        return _mean([c.hd95 for c in self.per_class])

    def to_dict(self):
        return {"per_class": [c.to_dict() for c in self.per_class],
                "mean_dice": self.mean_dice,
                "mean_hd95": self.mean_hd95,
                "foreground_only": self.foreground_only}


def evaluate_segmentation(pred_label, truth_label, num_classes, spacing=(1., 1., 1.), foreground_only=True,
                          pooled=False, with_hd95=True):
    """MetricsReport of an integer prediction against integer ground truth.

    With `with_hd95` False only Dice scores are computed (HD95 is reported as None).
    """
    pred_label = np.asarray(pred_label)
    truth_label = np.asarray(truth_label)
    if pred_label.shape != truth_label.shape:
        raise ContractViolation("label shapes differ: %s vs %s" % (pred_label.shape, truth_label.shape))
    classes = range(1 if foreground_only else 0, num_classes)
    per_class = []
    for class_id in classes:
        pred_mask = pred_label == class_id
        truth_mask = truth_label == class_id
        distance = hd95(pred_mask, truth_mask, spacing, pooled=pooled) if with_hd95 else None
        per_class.append(ClassMetrics(class_id, dice_score(pred_mask, truth_mask), distance))
    return MetricsReport(per_class, foreground_only)


def metrics_frame(reports):
    """DataFrame with one row per sample and class.

    Parameters:
    * reports: dict sample id -> MetricsReport, in output order
    """
    rows = []
    for sample_id, report in reports.items():
        for metrics in report.per_class:
            rows.append({"sample_id": sample_id, "class_id": metrics.class_id,
                         "dice": metrics.dice, "hd95": metrics.hd95})
    return pd.DataFrame(rows, columns=["sample_id", "class_id", "dice", "hd95"])


def _stats(series):
    series = pd.to_numeric(series, errors="coerce").dropna()
    if series.empty:
        return {"mean": None, "std": None, "count": 0}
    # population std, a single sample has std 0
    return {"mean": float(series.mean()), "std": float(series.std(ddof=0)), "count": int(series.size)}


def summarize(frame):
    """Mean and standard deviation of Dice and HD95 per class and over the per-sample class means."""
    summary = {"per_class": {}, "overall": {}}
    for class_id, group in frame.groupby("class_id", sort=True):
        summary["per_class"][str(class_id)] = {"dice": _stats(group["dice"]), "hd95": _stats(group["hd95"])}
    numeric = frame.assign(dice=pd.to_numeric(frame["dice"], errors="coerce"),
                           hd95=pd.to_numeric(frame["hd95"], errors="coerce"))
    per_sample = numeric.groupby("sample_id", sort=False)[["dice", "hd95"]].mean()
    summary["overall"] = {"dice": _stats(per_sample["dice"]), "hd95": _stats(per_sample["hd95"])}
    summary["num_samples"] = int(frame["sample_id"].nunique())
    return summary


def write_metrics_csv(frame, path):
    frame.to_csv(path, index=False, float_format="%.10g")


def write_summary_json(summary, path):
    with open(path, "w") as open_file:
        json.dump(summary, open_file, indent=2, sort_keys=True)
