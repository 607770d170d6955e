from __future__ import annotations

from typing import NamedTuple

import numpy as np

from numgrad.ops import log_softmax
from numgrad.tensor import ConfigError, NonFiniteError, Tensor, tsum
from predict.model import PredictionSet


class WTATerms(NamedTuple):
    regression: Tensor  # mean over agents
    classification: Tensor  # mean over agents
    best: np.ndarray  # M, winning mode per agent


def best_fde_modes(trajectories: np.ndarray, futures: np.ndarray) -> np.ndarray:
    """index of the mode whose endpoint is closest to the ground truth; first one on ties"""
    fde = np.linalg.norm(trajectories[:, :, -1, :] - futures[:, None, -1, :], axis=-1)
    return np.argmin(fde, axis=1)


def wta_terms(pred: PredictionSet, futures: np.ndarray) -> WTATerms:
    gt = np.asarray(futures, dtype=np.float64)
    M, K, T_f, _ = pred.trajectories.shape
    if gt.shape != (M, T_f, 2):
        raise ConfigError(f"ground-truth futures {gt.shape} do not match predictions {(M, T_f, 2)}")
    if not np.isfinite(gt).all():
        raise NonFiniteError("ground-truth futures hold non-finite values")
    best = best_fde_modes(pred.trajectories.data, gt)
    rows = np.arange(M)
    winner = pred.trajectories[rows, best]  # M x T_f x 2
    diff = winner - gt
    # squared L2 per step, averaged over steps and agents
    regression = tsum(diff * diff) * (1.0 / (M * T_f))
    logp = log_softmax(pred.logits, axis=-1)
    classification = -tsum(logp[rows, best]) * (1.0 / M)
    return WTATerms(regression, classification, best)


def wta_loss(pred: PredictionSet, futures: np.ndarray) -> Tensor:
    """Winner-takes-all: regress only the best-endpoint mode and push its score up"""
    terms = wta_terms(pred, futures)
    return terms.regression + terms.classification
