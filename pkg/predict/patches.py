from __future__ import annotations

import dataclasses
import logging

import numpy as np

from numgrad.attention import AttentionConfig, GridRangeError, multi_head_attention
from numgrad.layers import dense
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, reshape, transpose
from pv2bev.grid import BEVGrid, BEVGridMeta

"""
BEV patch tokens and agent-to-patch attention.
"""

logger = logging.getLogger(__name__)

Patch = tuple[int, int]


class PatchConfigError(ConfigError):
    """Patch sizes that do not tile the BEV grid"""

    def __init__(self, H: int, W: int, patch: Patch) -> None:
        self.H, self.W, self.patch = H, W, tuple(patch)
        super().__init__(H, W, self.patch)

    def __str__(self) -> str:
        ph, pw = self.patch
        bad = []
        if ph < 1 or self.H % ph:
            bad.append(f"H={self.H} by P_h={ph}")
        if pw < 1 or self.W % pw:
            bad.append(f"W={self.W} by P_w={pw}")
        return f"PatchConfigError: patch ({ph}, {pw}) does not tile {self.H}x{self.W}: cannot divide {' and '.join(bad)}"


def patch_grid(H: int, W: int, patch: Patch) -> tuple[int, int]:
    """(rows, cols) of patches; both dims must divide exactly"""
    ph, pw = patch
    if ph < 1 or pw < 1 or H % ph or W % pw:
        raise PatchConfigError(H, W, patch)
    return H // ph, W // pw


def patch_count(H: int, W: int, patch: Patch) -> int:
    rows, cols = patch_grid(H, W, patch)
    return rows * cols


@dataclasses.dataclass(frozen=True, eq=False)
class PatchEmbeds:
    embeddings: Tensor  # N x D_pred
    patch: Patch
    grid: tuple[int, int]  # patch rows, patch cols

    @property
    def count(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def origins(self) -> np.ndarray:
        """(N, 2) top-left (row, col) cell of every patch, row-major"""
        rr, cc = np.meshgrid(np.arange(self.grid[0]), np.arange(self.grid[1]), indexing="ij")
        return np.stack([rr.ravel() * self.patch[0], cc.ravel() * self.patch[1]], axis=1)


def patchify(bev: BEVGrid, patch: Patch, d_pred: int, params: ParamStore, position: bool = True) -> PatchEmbeds:
    """
    Cut the grid into non-overlapping P_h x P_w patches, flatten each to P_h*P_w*D
    and project it to d_pred with a shared linear map ("proj"). With `position`,
    a learned per-patch embedding ("pos") is added.
    """
    H, W, D = bev.meta.shape
    rows, cols = patch_grid(H, W, patch)
    ph, pw = patch
    blocks = reshape(bev.features, (rows, ph, cols, pw, D))
    flat = reshape(transpose(blocks, (0, 2, 1, 3, 4)), (rows * cols, ph * pw * D))
    tokens = dense(params.scope("proj"), flat, d_pred)
    if position:
        tokens = tokens + params.get("pos", (rows * cols, d_pred), fan=(d_pred, d_pred))
    return PatchEmbeds(tokens, (ph, pw), (rows, cols))


def agent_patch_index(positions: np.ndarray, meta: BEVGridMeta, patch: Patch) -> np.ndarray:
    """
    Flat row-major patch index of each (x, y) position. Positions on the far
    edge of the range fall in the last cell.
    """
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    inside = meta.extent.contains(p)
    if not inside.all():
        raise GridRangeError(p[~inside], (meta.H, meta.W))
    row, col = meta.cell_index(p)
    row = np.minimum(row, meta.H - 1)
    col = np.minimum(col, meta.W - 1)
    rows, cols = patch_grid(meta.H, meta.W, patch)
    return (row // patch[0]) * cols + col // patch[1]


def agent_bev_attention(patch_index: np.ndarray, patches: PatchEmbeds, cfg: AttentionConfig, params: ParamStore) -> Tensor:
    """
    Each agent's own patch token queries all N patch tokens: M x N attention
    scores, whatever the map size.
    """
    idx = np.asarray(patch_index, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= patches.count):
        raise ConfigError(f"patch index outside [0, {patches.count})")
    tokens = patches.embeddings
    return multi_head_attention(tokens[idx], tokens, tokens, cfg, params)
