from __future__ import annotations

import dataclasses
from typing import NamedTuple, Sequence

import numpy as np

from numgrad.layers import dense
from numgrad.ops import scatter_add_pool, softmax
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, concat, reshape
from pv2bev.grid import BEVGrid, BEVGridMeta
from pv2bev.stem import ViewFeatures
from synthscene.camera import Camera, ray_directions


@dataclasses.dataclass(frozen=True)
class DepthConfig:
    bins: int = 16
    d_min: float = 1.0
    d_max: float = 35.0

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ConfigError(f"need at least 2 depth bins, got {self.bins}")
        if not 0 < self.d_min < self.d_max:
            raise ConfigError(f"depth range [{self.d_min}, {self.d_max}] is empty")

    def depths(self) -> np.ndarray:
        return np.linspace(self.d_min, self.d_max, self.bins)


class LiftedPointCloud(NamedTuple):
    points: np.ndarray  # N x 3, ego frame
    features: Tensor  # N x D
    depth_weights: Tensor  # cameras x rows' x cols' x bins


def lift(feats: ViewFeatures, rig: Sequence[Camera], depth: DepthConfig, params: ParamStore) -> LiftedPointCloud:
    """
    Per feature pixel, a softmax over depth bins places the pixel feature at
    `bins` depths along its ray, scaled by the bin weight.
    """
    K, rows, cols, D = feats.maps.shape
    d = depth.depths()
    vv, uu = np.meshgrid((np.arange(rows) + 0.5) * feats.stride, (np.arange(cols) + 0.5) * feats.stride, indexing="ij")
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
    points, lifted, weights = [], [], []
    for k, cam in enumerate(rig):
        flat = reshape(feats.camera(k), (rows * cols, D))
        w = softmax(dense(params.scope("depth"), flat, depth.bins), axis=-1)  # rows*cols, bins
        rays = ray_directions(cam, uv)  # unit depth along the optical axis
        points.append((cam.translation[None, None, :] + d[None, :, None] * rays[:, None, :]).reshape(-1, 3))
        lifted.append(reshape(reshape(flat, (rows * cols, 1, D)) * reshape(w, (rows * cols, depth.bins, 1)), (-1, D)))
        weights.append(reshape(w, (1, rows, cols, depth.bins)))
    return LiftedPointCloud(np.concatenate(points), concat(lifted, axis=0), concat(weights, axis=0))


def splat(cloud: LiftedPointCloud, meta: BEVGridMeta):
    """Pillar pooling of lifted points into their BEV cell; returns the pooled features and the dropped count"""
    row, col = meta.cell_index(cloud.points[:, :2])
    return scatter_add_pool(np.stack([row, col], axis=1), cloud.features, meta.H, meta.W)


def lss_encode(
    feats: ViewFeatures,
    rig: Sequence[Camera],
    meta: BEVGridMeta,
    depth: DepthConfig,
    params: ParamStore,
    frame: int = 0,
) -> BEVGrid:
    pooled = splat(lift(feats, rig, depth, params), meta)
    return BEVGrid(meta, pooled.grid, frame, temporal=False)
