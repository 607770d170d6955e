from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from mapdec.decoder import DECODER_CLASSES, NONE, DecodedMap
from numgrad.ops import log_softmax
from numgrad.tensor import Tensor, tabs, tsum
from synthscene.geometry import resample_polyline
from synthscene.scene import VectorMap

"""
Bipartite matching of decoded instances to ground-truth elements, and the matching loss.
"""

logger = logging.getLogger(__name__)

# tie-break perturbation, relative to the cost scale
TIE_EPS = 1e-9


class MatchingError(ValueError):
    """Assignment problems without an injective solution"""

    def __init__(self, n_pred: int, n_gt: int, reason: str = "") -> None:
        self.n_pred = n_pred
        self.n_gt = n_gt
        self.reason = reason or f"{n_gt} ground-truth elements for {n_pred} predictions"
        super().__init__(n_pred, n_gt, self.reason)

    def __str__(self) -> str:
        return f"MatchingError: {self.reason}"


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """
    Minimum-cost injective assignment of the columns (ground truth) to the rows
    (predictions) of an (n_pred, n_gt) cost matrix. Returns the prediction index
    of every ground-truth column. Among equal-cost optima, lower ground-truth
    columns take lower prediction indices.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise MatchingError(0, 0, f"cost matrix must be 2-D, got shape {cost.shape}")
    n_pred, n_gt = cost.shape
    if n_gt > n_pred:
        raise MatchingError(n_pred, n_gt)
    if not np.all(np.isfinite(cost)):
        raise MatchingError(n_pred, n_gt, "cost matrix has non-finite entries")
    if n_gt == 0:
        return np.zeros(0, dtype=np.int64)
    # rearrangement: sum of p * (n_gt - g) is smallest when p ascends with g
    scale = max(1.0, float(np.abs(cost).max()))
    pred = np.arange(n_pred, dtype=np.float64)[:, None]
    rank = (n_gt - np.arange(n_gt, dtype=np.float64))[None, :]
    eps = TIE_EPS * scale / (n_pred * n_gt * n_gt)
    rows, cols = linear_sum_assignment((cost + eps * pred * rank).T)
    assignment = np.empty(n_gt, dtype=np.int64)
    assignment[rows] = cols
    return assignment


def resampled_targets(gt: VectorMap, n_pts: int) -> np.ndarray:
    """(n_gt, n_pts, 2) equidistant vertices per element"""
    if len(gt) == 0:
        return np.zeros((0, n_pts, 2))
    return np.stack([resample_polyline(e.polyline, n_pts) for e in gt])


class MapMatch(NamedTuple):
    pred: np.ndarray  # matched prediction index per gt element
    reversed: np.ndarray  # whether the gt vertex order is reversed for that pair
    targets: np.ndarray  # per prediction: class index, NONE when unmatched
    cost: np.ndarray  # n_pred x n_gt matching cost


def match_map(pred: DecodedMap, gt: VectorMap, cls_weight: float = 2.0, reg_weight: float = 5.0) -> MapMatch:
    """
    The matching cost of (prediction, element) is the change of the full loss
    when that prediction is matched instead of trained toward "none", so the
    Hungarian optimum is the loss-minimising assignment.
    """
    n = len(pred)
    n_gt = len(gt)
    targets = resampled_targets(gt, pred.n_pts)
    logp = log_softmax(Tensor(np.asarray(pred.logits.data, dtype=np.float64)), axis=-1).data
    labels = np.array([DECODER_CLASSES.index(e.cls) for e in gt], dtype=np.int64)
    verts = np.asarray(pred.vertices.data, dtype=np.float64)[:, None]
    inv = 1.0 / pred.extent.half_extent
    forward = np.abs((verts - targets[None]) * inv).sum(axis=(2, 3))
    backward = np.abs((verts - targets[None, :, ::-1]) * inv).sum(axis=(2, 3))
    reg = np.minimum(forward, backward) / pred.n_pts
    cls = -(logp[:, labels] - logp[:, NONE:NONE + 1])
    cost = cls_weight / n * cls + reg_weight / max(n_gt, 1) * reg
    assignment = hungarian_match(cost)
    rev = backward[assignment, np.arange(n_gt)] < forward[assignment, np.arange(n_gt)]
    cls_targets = np.full(n, NONE, dtype=np.int64)
    cls_targets[assignment] = labels
    return MapMatch(assignment, rev, cls_targets, cost)


def map_matching_loss(pred: DecodedMap, gt: VectorMap, cls_weight: float = 2.0, reg_weight: float = 5.0) -> Tensor:
    """
    Class cross-entropy averaged over predictions (unmatched ones target "none")
    plus the L1 vertex distance of matched pairs in half-extent units, averaged
    over ground-truth elements. Each pair uses the gt vertex order, forward or
    reversed, that fits the prediction better. An empty gt map leaves the
    classification term only.
    """
    n = len(pred)
    match = match_map(pred, gt, cls_weight, reg_weight)
    logp = log_softmax(pred.logits, axis=-1)
    ce = -tsum(logp[np.arange(n), match.targets]) * (cls_weight / n)
    if len(gt) == 0:
        return ce
    targets = resampled_targets(gt, pred.n_pts)
    order = np.argsort(match.pred)
    oriented: list[np.ndarray] = []
    for g in order:
        oriented.append(targets[g, ::-1] if match.reversed[g] else targets[g])
    diff = (pred.vertices[match.pred[order]] - np.stack(oriented)) * (1.0 / pred.extent.half_extent)
    per_pair = tsum(tabs(diff), axis=(1, 2)) * (1.0 / pred.n_pts)
    return ce + tsum(per_pair) * (reg_weight / len(gt))
