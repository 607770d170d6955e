from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from numgrad.layers import dense
from numgrad.ops import bilinear_sample, conv1d
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, concat, relu, reshape, tmax, zeros
from pv2bev.grid import BEVGrid
from synthscene.geometry import PERCEPTION_RANGE, PerceptionRange, resample_polyline
from synthscene.scene import MAP_CLASSES, VectorMap

logger = logging.getLogger(__name__)

VERTEX_FEATURES = 2 + len(MAP_CLASSES)


def lane_vertices(vmap: VectorMap, n_pts: int) -> np.ndarray:
    """(E, n_pts, 2) equidistant vertices per element, metres"""
    if len(vmap) == 0:
        return np.zeros((0, n_pts, 2))
    return np.stack([resample_polyline(e.polyline, n_pts) for e in vmap])


def lane_vertex_features(vmap: VectorMap, n_pts: int, extent: PerceptionRange = PERCEPTION_RANGE) -> np.ndarray:
    """(E, n_pts, 2 + classes): vertex position in half-extent units and the element class one-hot"""
    xy = (lane_vertices(vmap, n_pts) - extent.center) / extent.half_extent
    onehot = np.zeros((len(vmap), n_pts, len(MAP_CLASSES)))
    for i, e in enumerate(vmap):
        onehot[i, :, MAP_CLASSES.index(e.cls)] = 1.0
    return np.concatenate([xy, onehot], axis=-1)


def encode_lanes_vectornet(
    vertex_features,
    params: ParamStore,
    out_dim: int,
    extra: Tensor | None = None,
) -> Tensor:
    """
    Polyline subgraph: a two-layer MLP on every vertex, then a max over each
    element's vertices. With `extra` per-vertex features the hidden layer is
    twice as wide. An empty map gives a (0, out_dim) result.
    """
    x = vertex_features if isinstance(vertex_features, Tensor) else Tensor(vertex_features)
    if x.ndim != 3:
        raise ConfigError(f"vertex features must be (elements, vertices, features), got {x.shape}")
    E, V, _ = x.shape
    if E == 0:
        return zeros((0, out_dim))
    hidden = out_dim
    if extra is not None:
        if extra.shape[:2] != (E, V):
            raise ConfigError(f"extra features {extra.shape} do not line up with vertices {x.shape}")
        x = concat([x, extra], axis=-1)
        hidden = 2 * out_dim
    h = relu(dense(params.scope("fc1"), x, hidden))
    h = dense(params.scope("fc2"), h, out_dim)
    return tmax(h, axis=1)


class AugmentedVertices(NamedTuple):
    features: Tensor  # E x V x (2 + out_dim)
    clamped: np.ndarray  # E x V, vertices pulled back into the range


def s2_augment_vertices(
    vertices: np.ndarray,
    bev: BEVGrid,
    params: ParamStore,
    out_dim: int,
    kernel: int = 3,
) -> AugmentedVertices:
    """
    Sample the BEV grid under every lane vertex, run a 1-D convolution along
    each element's vertex sequence and prepend the vertex position.

    The position features are normalised, not metres: (xy - center) / half_extent,
    so the range edges sit at +-1 like the lane features of `lane_vertex_features`.
    Vertices outside the perception range are clamped onto it and flagged.
    """
    v = np.asarray(vertices, dtype=np.float64)
    E, V, _ = v.shape
    extent = bev.meta.extent
    clamped = extent.clamp(v)
    moved = np.any(clamped != v, axis=-1)
    if moved.any():
        logger.debug("clamped %d lane vertices into the perception range", int(moved.sum()))
    D = bev.meta.D
    xy = Tensor((clamped - extent.center) / extent.half_extent, dtype=bev.features.dtype)
    if E == 0:
        return AugmentedVertices(zeros((0, V, 2 + out_dim)), moved)
    sampled = reshape(bilinear_sample(bev.features, bev.meta.grid_coords(clamped.reshape(-1, 2))), (E, V, D))
    w = params.get("conv.w", (kernel, D, out_dim))
    conv = conv1d(sampled, w, params.bias("conv.b", out_dim))
    return AugmentedVertices(concat([xy, conv], axis=-1), moved)
