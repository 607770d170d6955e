from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from numgrad.layers import dense
from numgrad.ops import grouped_bilinear_sample, softmax
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, ShapeError, Tensor, matmul, reshape, tanh, transpose, tsum

"""
Multi-head attention and grid deformable attention.
"""


class GridRangeError(ValueError):
    """Reference points outside the value grid"""

    def __init__(self, points: np.ndarray, grid: tuple) -> None:
        self.points = np.asarray(points)
        self.grid = grid
        super().__init__(self.points, grid)

    def __str__(self) -> str:
        shown = ", ".join(f"({r:.3f}, {c:.3f})" for r, c in self.points[:4])
        more = f" and {len(self.points) - 4} more" if len(self.points) > 4 else ""
        return f"GridRangeError: {shown}{more} outside grid {self.grid}"


@dataclasses.dataclass(frozen=True)
class AttentionConfig:
    heads: int = 4
    head_dim: int = 8
    mlp_dim: int = 64
    depth: int = 1

    def __post_init__(self) -> None:
        for field in dataclasses.fields(self):
            if getattr(self, field.name) < 1:
                raise ConfigError(f"AttentionConfig.{field.name} must be positive, got {getattr(self, field.name)}")

    @property
    def embed_dim(self) -> int:
        return self.heads * self.head_dim


@dataclasses.dataclass(frozen=True)
class DeformableConfig:
    heads: int = 4
    n_points: int = 4
    offset_scale: float = 2.0

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ConfigError(f"DeformableConfig.n_points must be >= 1, got {self.n_points}")
        if self.heads < 1:
            raise ConfigError(f"DeformableConfig.heads must be >= 1, got {self.heads}")
        if self.offset_scale < 0:
            raise ConfigError(f"DeformableConfig.offset_scale must be >= 0, got {self.offset_scale}")


def _split_heads(x: Tensor, heads: int) -> Tensor:
    n, d = x.shape
    return transpose(reshape(x, (n, heads, d // heads)), (1, 0, 2))


def multi_head_attention(Q: Tensor, K: Tensor, V: Tensor, cfg: AttentionConfig, params: ParamStore) -> Tensor:
    """
    Scaled dot-product attention of M queries over N keys, per head, heads
    concatenated then projected. Weights live under q/k/v/o in `params`.
    """
    D = Q.shape[-1]
    if D % cfg.heads:
        raise ConfigError(f"embedding width {D} is not divisible by {cfg.heads} heads")
    if D != cfg.embed_dim:
        raise ConfigError(f"embedding width {D} != heads x head_dim = {cfg.embed_dim}")
    if K.shape != V.shape or K.shape[-1] != D or Q.ndim != 2 or K.ndim != 2:
        raise ShapeError("multi_head_attention", Q.shape, K.shape, V.shape)
    if Q.shape[0] < 1 or K.shape[0] < 1:
        raise ShapeError("multi_head_attention", Q.shape, K.shape, detail="needs at least one query and one key")
    q = _split_heads(dense(params.scope("q"), Q, D), cfg.heads)
    k = _split_heads(dense(params.scope("k"), K, D), cfg.heads)
    v = _split_heads(dense(params.scope("v"), V, D), cfg.heads)
    scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(cfg.head_dim))
    mixed = matmul(softmax(scores, axis=-1), v)  # heads, M, head_dim
    merged = reshape(transpose(mixed, (1, 0, 2)), (Q.shape[0], D))
    return dense(params.scope("o"), merged, D)


class Sampling(NamedTuple):
    offsets: Tensor  # Nq, heads, points, 2 (cells)
    weights: Tensor  # Nq, heads, points


def deformable_sampling(q: Tensor, cfg: DeformableConfig, params: ParamStore) -> Sampling:
    """Learned sampling offsets (tanh bounded to offset_scale cells) and per-head softmax weights"""
    n = q.shape[0]
    offsets = tanh(dense(params.scope("offset"), q, cfg.heads * cfg.n_points * 2)) * cfg.offset_scale
    logits = dense(params.scope("attn"), q, cfg.heads * cfg.n_points)
    return Sampling(
        reshape(offsets, (n, cfg.heads, cfg.n_points, 2)),
        softmax(reshape(logits, (n, cfg.heads, cfg.n_points)), axis=-1),
    )


def in_grid(ref: np.ndarray, H: int, W: int) -> np.ndarray:
    """Continuous (row, col) positions covered by an H x W grid whose integer coordinates are cell centres"""
    ref = np.asarray(ref)
    return (ref[:, 0] >= -0.5) & (ref[:, 0] <= H - 0.5) & (ref[:, 1] >= -0.5) & (ref[:, 1] <= W - 0.5)


def deformable_attention(
    q: Tensor,
    ref: np.ndarray,
    value: Tensor,
    cfg: DeformableConfig,
    params: ParamStore,
    check_range: bool = True,
) -> Tensor:
    """
    For each query row, sample the (H, W, D) value grid at ref + learned offsets
    (n_points per head) and mix the samples with per-head softmax weights.
    Samples falling outside the grid read as zeros.
    """
    ref = np.asarray(ref, dtype=np.float64)
    H, W, D = value.shape
    Nq = q.shape[0]
    if D % cfg.heads:
        raise ConfigError(f"value width {D} is not divisible by {cfg.heads} heads")
    if ref.shape != (Nq, 2):
        raise ShapeError("deformable_attention", q.shape, ref.shape, detail="one (row, col) reference per query")
    if check_range:
        outside = ~in_grid(ref, H, W)
        if outside.any():
            raise GridRangeError(ref[outside], (H, W))
    hd = D // cfg.heads
    P = cfg.n_points

    projected = reshape(dense(params.scope("value"), reshape(value, (H * W, D)), D), (H, W, cfg.heads, hd))
    sampling = deformable_sampling(q, cfg, params)
    # Nq, heads, P, 2 -> Nq * P, heads, 2
    pts = transpose(sampling.offsets + ref[:, None, None, :].astype(q.dtype), (0, 2, 1, 3))
    sampled = grouped_bilinear_sample(projected, reshape(pts, (Nq * P, cfg.heads, 2)))
    sampled = reshape(sampled, (Nq, P, cfg.heads, hd))
    weights = reshape(transpose(sampling.weights, (0, 2, 1)), (Nq, P, cfg.heads, 1))
    mixed = tsum(sampled * weights, axis=1)  # Nq, heads, hd
    return dense(params.scope("out"), reshape(mixed, (Nq, D)), D)
