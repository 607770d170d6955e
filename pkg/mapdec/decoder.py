from __future__ import annotations

import dataclasses
import logging

import numpy as np

from numgrad.attention import AttentionConfig, DeformableConfig, deformable_attention, multi_head_attention
from numgrad.layers import dense, mlp, norm
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, mean, reshape, tanh
from pv2bev.grid import BEVGrid
from synthscene.dataset import format_map
from synthscene.geometry import PERCEPTION_RANGE, PerceptionRange
from synthscene.scene import MAP_CLASSES, MapElement, VectorMap

"""
Vectorised map decoder: instance x point queries refined against a BEV grid,
regressing polyline vertices and classifying each instance.
"""

logger = logging.getLogger(__name__)

DECODER_CLASSES = MAP_CLASSES + ("none",)
NONE = len(MAP_CLASSES)


@dataclasses.dataclass(frozen=True)
class DecoderConfig:
    n_inst: int = 12
    n_pts: int = 10
    depth: int = 2
    heads: int = 4
    deform: DeformableConfig = DeformableConfig()
    mlp_dim: int = 64
    score_threshold: float = 0.4
    with_centerlines: bool = True
    cls_weight: float = 2.0
    reg_weight: float = 5.0

    def __post_init__(self) -> None:
        if min(self.n_inst, self.n_pts, self.depth, self.heads, self.mlp_dim) < 1:
            raise ConfigError(f"decoder sizes must be positive: {self}")
        if self.n_pts < 2:
            raise ConfigError(f"polylines need at least 2 points, got n_pts={self.n_pts}")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError(f"score threshold {self.score_threshold} outside [0, 1]")

    @property
    def classes(self) -> tuple:
        return MAP_CLASSES if self.with_centerlines else tuple(c for c in MAP_CLASSES if c != "centerline")

    def target(self, vmap: VectorMap) -> VectorMap:
        """the part of a ground-truth map this decoder is trained to emit"""
        return vmap.of_class(*self.classes)


@dataclasses.dataclass(frozen=True, eq=False)
class MapQuerySet:
    instance: Tensor  # n_inst x D
    point: Tensor  # n_pts x D

    @classmethod
    def from_params(cls, params: ParamStore, cfg: DecoderConfig, D: int) -> MapQuerySet:
        return cls(
            params.get("instance", (cfg.n_inst, D), fan=(D, D)),
            params.get("point", (cfg.n_pts, D), fan=(D, D)),
        )

    @property
    def n_inst(self) -> int:
        return self.instance.shape[0]

    @property
    def n_pts(self) -> int:
        return self.point.shape[0]

    def queries(self) -> Tensor:
        """(n_inst * n_pts, D), instance-major"""
        n, p, D = self.n_inst, self.n_pts, self.instance.shape[1]
        combined = reshape(self.instance, (n, 1, D)) + reshape(self.point, (1, p, D))
        return reshape(combined, (n * p, D))


@dataclasses.dataclass(frozen=True, eq=False)
class DecodedMap:
    logits: Tensor  # n_inst x 5
    vertices: Tensor  # n_inst x n_pts x 2, metres
    extent: PerceptionRange = PERCEPTION_RANGE

    def __len__(self) -> int:
        return self.logits.shape[0]

    @property
    def n_pts(self) -> int:
        return self.vertices.shape[1]

    def probabilities(self) -> np.ndarray:
        z = np.asarray(self.logits.data, dtype=np.float64)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def scores(self) -> np.ndarray:
        """max class probability, "none" excluded"""
        return self.probabilities()[:, :NONE].max(axis=1)

    def labels(self) -> list[str]:
        return [MAP_CLASSES[i] for i in self.probabilities()[:, :NONE].argmax(axis=1)]

    def to_vector_map(self, threshold: float = 0.4, classes=MAP_CLASSES):
        """Instances scoring at least `threshold`, as a VectorMap plus their scores"""
        elements, kept = [], []
        for label, score, poly in zip(self.labels(), self.scores(), np.asarray(self.vertices.data, dtype=np.float64)):
            if score < threshold or label not in classes:
                continue
            poly = poly[np.concatenate([[True], np.any(np.diff(poly, axis=0) != 0, axis=1)])]
            if label == "crosswalk" and not np.array_equal(poly[0], poly[-1]):
                poly = np.concatenate([poly, poly[:1]])
            if len(poly) < 2:
                continue
            elements.append(MapElement(label, poly))
            kept.append(float(score))
        return VectorMap(tuple(elements)), kept


def format_decoded(decoded: DecodedMap, threshold: float = 0.4, classes=MAP_CLASSES) -> list[str]:
    """map section lines with a per-instance score on each element header"""
    vmap, scores = decoded.to_vector_map(threshold, classes)
    return format_map(vmap, scores)


def vertex_head(params: ParamStore, q: Tensor, extent: PerceptionRange) -> Tensor:
    """(N, D) point queries -> (N, 2) metric vertices strictly inside the perception range"""
    return tanh(dense(params, q, 2)) * extent.half_extent + extent.center


def decode_map(
    bev: BEVGrid,
    queries: MapQuerySet,
    cfg: DecoderConfig,
    params: ParamStore,
) -> DecodedMap:
    """
    `cfg.depth` blocks of query self-attention, deformable cross-attention into
    the BEV grid around each query's current vertex estimate, and an MLP.
    Vertices are re-estimated after every block by a shared regression head.
    """
    meta = bev.meta
    D = meta.D
    if D % cfg.heads:
        raise ConfigError(f"BEV width {D} is not divisible by {cfg.heads} decoder heads")
    attn_cfg = AttentionConfig(heads=cfg.heads, head_dim=D // cfg.heads, mlp_dim=cfg.mlp_dim, depth=cfg.depth)
    n, p = queries.n_inst, queries.n_pts
    q = queries.queries()
    reg = params.scope("reg")
    vertices = vertex_head(reg, q, meta.extent)
    for b in range(cfg.depth):
        block = params.scope(f"block{b}")
        q = norm(block.scope("ln1"), q + multi_head_attention(q, q, q, attn_cfg, block.scope("self")))
        ref = meta.grid_coords(vertices.data)
        ref = np.clip(ref, -0.5, [meta.H - 0.5, meta.W - 0.5])
        q = norm(block.scope("ln2"), q + deformable_attention(q, ref, bev.features, cfg.deform, block.scope("cross")))
        q = norm(block.scope("ln3"), q + mlp(block.scope("ffn"), q, cfg.mlp_dim, D))
        vertices = vertex_head(reg, q, meta.extent)
    pooled = mean(reshape(q, (n, p, D)), axis=1)
    logits = dense(params.scope("cls"), pooled, len(DECODER_CLASSES))
    logger.debug("decoded %d instances x %d points", n, p)
    return DecodedMap(logits, reshape(vertices, (n, p, 2)), meta.extent)


def decode_bev(bev: BEVGrid, cfg: DecoderConfig, params: ParamStore, queries: MapQuerySet | None = None) -> DecodedMap:
    """decode_map with the query set owned by `params`"""
    if queries is None:
        queries = MapQuerySet.from_params(params.scope("queries"), cfg, bev.meta.D)
    return decode_map(bev, queries, cfg, params)
