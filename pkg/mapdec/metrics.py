from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from synthscene.geometry import polyline_length, resample_polyline
from synthscene.scene import MAP_CLASSES, VectorMap

"""
Map-quality metrics over polyline sets.
"""

# distance charged for a class present on one side only, metres
MISSING_CLASS_DISTANCE = 15.0


class EmptyMapError(ValueError):
    """A metric needs at least one polyline on each side"""


def sample_points(polylines: Sequence[np.ndarray], step: float = 0.5) -> np.ndarray:
    """Points along every polyline, no further apart than `step`; single vertices stay single points"""
    if step <= 0:
        raise ValueError(f"resample step must be positive, got {step}")
    out = []
    for poly in polylines:
        poly = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
        if len(poly) == 1:
            out.append(poly)
            continue
        n = max(2, int(math.ceil(polyline_length(poly) / step)) + 1)
        out.append(resample_polyline(poly, n))
    return np.concatenate(out) if out else np.zeros((0, 2))


def chamfer_distance(A: Sequence[np.ndarray], B: Sequence[np.ndarray], step: float = 0.5) -> float:
    """Symmetric Chamfer distance: mean of the two mean nearest-point distances, metres"""
    if len(A) == 0 or len(B) == 0:
        raise EmptyMapError(f"chamfer distance between {len(A)} and {len(B)} polylines")
    a, b = sample_points(A, step), sample_points(B, step)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def class_chamfer(pred: VectorMap, gt: VectorMap, step: float = 0.5, classes=MAP_CLASSES) -> dict[str, float]:
    """Per-class Chamfer distance over the classes present in either map"""
    out: dict[str, float] = {}
    for cls in classes:
        p = [e.polyline for e in pred.of_class(cls)]
        g = [e.polyline for e in gt.of_class(cls)]
        if not p and not g:
            continue
        out[cls] = chamfer_distance(p, g, step) if p and g else MISSING_CLASS_DISTANCE
    return out


def mean_chamfer(pred: VectorMap, gt: VectorMap, step: float = 0.5, classes=MAP_CLASSES) -> float:
    per_class = class_chamfer(pred, gt, step, classes)
    if not per_class:
        raise EmptyMapError("both maps are empty")
    return float(np.mean(list(per_class.values())))
