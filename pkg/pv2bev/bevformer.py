from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from numgrad.attention import DeformableConfig, deformable_attention
from numgrad.ops import scatter_add_pool
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, reshape
from pv2bev.grid import BEVGrid, BEVGridMeta
from pv2bev.stem import ViewFeatures
from synthscene.camera import Camera, project_points

"""
Temporal self-attention and spatial cross-attention over a grid of BEV queries.
"""

logger = logging.getLogger(__name__)


class EncoderContractError(ValueError):
    """Inputs that break an encoder's contract (variant, previous frame, grid meta)"""


def reference_heights(n_ref: int, low: float = -1.0, high: float = 3.0) -> np.ndarray:
    if n_ref < 1:
        raise ConfigError(f"need at least one reference height, got {n_ref}")
    return np.linspace(low, high, n_ref)


def tsa_layer(
    Q: Tensor,
    prev: BEVGrid | None,
    meta: BEVGridMeta,
    cfg: DeformableConfig,
    params: ParamStore,
) -> Tensor:
    """
    Each cell queries the current queries around itself and, when given, the
    previous grid (already aligned to the current ego frame). The two
    deformable attentions are summed.
    """
    if Q.shape != meta.shape:
        raise EncoderContractError(f"queries {Q.shape} do not match grid {meta.shape}")
    if prev is not None and prev.meta != meta:
        raise EncoderContractError(f"previous grid meta {prev.meta} differs from {meta}")
    H, W, D = meta.shape
    q = reshape(Q, (H * W, D))
    ref = meta.cell_grid()
    out = deformable_attention(q, ref, Q, cfg, params.scope("self"))
    if prev is not None:
        out = out + deformable_attention(q, ref, prev.features, cfg, params.scope("prev"))
    return reshape(out, (H, W, D))


def camera_hits(meta: BEVGridMeta, rig: Sequence[Camera], heights: np.ndarray) -> list[np.ndarray]:
    """Per camera, an (H*W, n_ref) mask of reference points that project inside its image, plus their pixels"""
    centers = meta.cell_centers()
    n_ref = len(heights)
    pts = np.concatenate(
        [np.repeat(centers, n_ref, axis=0), np.tile(np.asarray(heights), len(centers))[:, None]], axis=1
    )
    hits = []
    for cam in rig:
        uv, ok = project_points(pts, cam)
        hits.append((ok.reshape(-1, n_ref), uv.reshape(-1, n_ref, 2)))
    return hits


def hit_counts(meta: BEVGridMeta, rig: Sequence[Camera], heights: np.ndarray) -> np.ndarray:
    """(H, W) number of cameras that see at least one reference point of each cell"""
    counts = sum(ok.any(axis=1).astype(np.int64) for ok, _ in camera_hits(meta, rig, heights))
    return np.asarray(counts).reshape(meta.H, meta.W)


def sca_layer(
    Q: Tensor,
    feats: ViewFeatures,
    rig: Sequence[Camera],
    meta: BEVGridMeta,
    cfg: DeformableConfig,
    params: ParamStore,
    n_ref: int = 4,
) -> Tensor:
    """
    Each cell lifts n_ref reference points at fixed heights, projects them into
    every camera and attends around each projection on that camera's feature map.
    Contributions are averaged over the cameras that see the cell; unseen cells
    pass their query through unchanged.
    """
    if len(rig) == 0:
        raise ConfigError("spatial cross-attention needs at least one camera")
    if feats.cameras != len(rig):
        raise EncoderContractError(f"{feats.cameras} feature maps for {len(rig)} cameras")
    H, W, D = meta.shape
    q = reshape(Q, (H * W, D))
    heights = reference_heights(n_ref)
    total: Tensor | None = None
    seen = np.zeros(H * W, dtype=np.int64)
    for k, (ok, uv) in enumerate(camera_hits(meta, rig, heights)):
        cell_idx, ref_idx = np.nonzero(ok)
        if len(cell_idx) == 0:
            continue
        seen += ok.any(axis=1)
        fmap = feats.camera(k)
        ref = feats.feature_coords(uv[cell_idx, ref_idx])
        ref[:, 0] = np.clip(ref[:, 0], -0.5, fmap.shape[0] - 0.5)
        ref[:, 1] = np.clip(ref[:, 1], -0.5, fmap.shape[1] - 0.5)
        attended = deformable_attention(q[cell_idx], ref, fmap, cfg, params)
        cells = np.stack([cell_idx // W, cell_idx % W], axis=1)
        pooled = scatter_add_pool(cells, attended, H, W).grid
        total = pooled if total is None else total + pooled
    unseen = (seen == 0).reshape(H, W, 1).astype(Q.dtype)
    if total is None:
        return Q
    scale = np.where(seen > 0, 1.0 / np.maximum(seen, 1), 0.0).reshape(H, W, 1).astype(Q.dtype)
    logger.debug("sca: %d of %d cells seen", int(np.count_nonzero(seen)), H * W)
    return total * scale + Q * unseen
