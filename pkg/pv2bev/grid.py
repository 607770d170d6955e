from __future__ import annotations

import dataclasses
import logging
import pathlib

import numpy as np

from numgrad.blob import read_blob, write_blob
from numgrad.tensor import ConfigError, NonFiniteError, Tensor
from synthscene.geometry import PERCEPTION_RANGE, PerceptionRange, cell_of

"""
BEV grid over the perception range.

Row i covers y in [y_min + i*cell, y_min + (i+1)*cell), column j covers x likewise.
Continuous grid coordinates put integer values on cell centres.
"""

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class BEVGridMeta:
    H: int = 100
    W: int = 50
    D: int = 32
    extent: PerceptionRange = PERCEPTION_RANGE

    def __post_init__(self) -> None:
        if min(self.H, self.W, self.D) < 1:
            raise ConfigError(f"BEV grid dims must be positive, got {self.H}x{self.W}x{self.D}")
        if not np.isclose(self.extent.height / self.H, self.extent.width / self.W, rtol=1e-9):
            raise ConfigError(
                f"non-square cells: {self.extent.height}/{self.H} m along y vs {self.extent.width}/{self.W} m along x"
            )

    @classmethod
    def full_scale(cls) -> BEVGridMeta:
        return cls(H=200, W=100, D=256)

    @property
    def cell(self) -> float:
        return self.extent.height / self.H

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.H, self.W, self.D

    @property
    def center_index(self) -> tuple[float, float]:
        """continuous (row, col) of the ego origin"""
        e = self.extent
        return self.H * (-e.y_min) / e.height - 0.5, self.W * (-e.x_min) / e.width - 0.5

    def cell_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return cell_of(points, self.extent, self.H, self.W)

    def grid_coords(self, points: np.ndarray) -> np.ndarray:
        """(P, 2) metric (x, y) -> (P, 2) continuous (row, col)"""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        e = self.extent
        row = (p[:, 1] - e.y_min) * self.H / e.height - 0.5
        col = (p[:, 0] - e.x_min) * self.W / e.width - 0.5
        return np.stack([row, col], axis=1)

    def cell_centers(self) -> np.ndarray:
        """(H*W, 2) metric centres in row-major order"""
        e = self.extent
        y = e.y_min + (np.arange(self.H) + 0.5) * self.cell
        x = e.x_min + (np.arange(self.W) + 0.5) * self.cell
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def cell_grid(self) -> np.ndarray:
        """(H*W, 2) integer (row, col) of every cell, row-major"""
        rr, cc = np.meshgrid(np.arange(self.H), np.arange(self.W), indexing="ij")
        return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)


@dataclasses.dataclass(frozen=True, eq=False)
class BEVGrid:
    meta: BEVGridMeta
    features: Tensor  # H x W x D
    frame: int
    temporal: bool = False

    def __post_init__(self) -> None:
        if self.features.shape != self.meta.shape:
            raise ConfigError(f"BEV features {self.features.shape} do not match grid {self.meta.shape}")
        if not np.all(np.isfinite(self.features.data)):
            raise NonFiniteError(f"non-finite BEV features at frame {self.frame}")

    def detach(self) -> BEVGrid:
        return dataclasses.replace(self, features=self.features.detach())


def sidecar_path(path: str | pathlib.Path) -> pathlib.Path:
    p = pathlib.Path(path)
    return p.with_name(p.name + ".meta")


def save_bev(grid: BEVGrid, path: str | pathlib.Path) -> pathlib.Path:
    """BEVT blob of the features plus a one-line `H W D cell frame temporal` sidecar"""
    m = grid.meta
    pathlib.Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_blob(path, grid.features.data)
    sidecar_path(path).write_text(f"{m.H} {m.W} {m.D} {m.cell!r} {grid.frame} {int(grid.temporal)}\n")
    logger.debug("saved BEV frame %d to %s", grid.frame, path)
    return pathlib.Path(path)


def load_bev(path: str | pathlib.Path) -> BEVGrid:
    H, W, D, cell, frame, temporal = sidecar_path(path).read_text().split()
    meta = BEVGridMeta(int(H), int(W), int(D))
    if not np.isclose(meta.cell, float(cell)):
        raise ConfigError(f"sidecar cell {cell} does not match {H}x{W} over the perception range")
    return BEVGrid(meta, Tensor(read_blob(path)), int(frame), bool(int(temporal)))
