from __future__ import annotations

import dataclasses
import logging

from numgrad.attention import DeformableConfig
from numgrad.layers import mlp, norm
from numgrad.ops import conv2d
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, relu, reshape
from pv2bev.bevformer import EncoderContractError, sca_layer, tsa_layer
from pv2bev.grid import BEVGrid, BEVGridMeta
from pv2bev.lss import DepthConfig, lss_encode
from pv2bev.stem import ViewFeatures, encode_views
from pv2bev.temporal import warp_bev
from synthscene.geometry import relative_pose
from synthscene.scene import Scene

logger = logging.getLogger(__name__)

VARIANTS = ("bevformer", "lss")


@dataclasses.dataclass(frozen=True)
class EncoderConfig:
    meta: BEVGridMeta = BEVGridMeta()
    blocks: int = 1
    stem_hidden: int = 16
    deform: DeformableConfig = DeformableConfig()
    n_ref: int = 4
    mlp_dim: int = 64
    depth: DepthConfig = DepthConfig()

    def __post_init__(self) -> None:
        if self.blocks < 1 or self.n_ref < 1 or self.stem_hidden < 1 or self.mlp_dim < 1:
            raise ConfigError(f"invalid encoder config {self}")
        if self.meta.D % self.deform.heads:
            raise ConfigError(f"embed {self.meta.D} is not divisible by {self.deform.heads} heads")

    @classmethod
    def mini(cls, D: int = 8) -> EncoderConfig:
        """10 x 5 grid for gradient checks"""
        return cls(meta=BEVGridMeta(H=10, W=5, D=D), deform=DeformableConfig(heads=2, n_points=2), mlp_dim=2 * D, stem_hidden=4)


def bevformer_blocks(
    feats: ViewFeatures,
    scene: Scene,
    prev: BEVGrid | None,
    cfg: EncoderConfig,
    params: ParamStore,
):
    meta = cfg.meta
    Q = params.get("queries", meta.shape, fan=(meta.D, meta.D))
    for b in range(cfg.blocks):
        block = params.scope(f"block{b}")
        Q = norm(block.scope("ln1"), Q + tsa_layer(Q, prev, meta, cfg.deform, block.scope("tsa")))
        Q = norm(block.scope("ln2"), Q + sca_layer(Q, feats, scene.rig, meta, cfg.deform, block.scope("sca"), cfg.n_ref))
        flat = reshape(Q, (meta.H * meta.W, meta.D))
        Q = norm(block.scope("ln3"), Q + reshape(mlp(block.scope("ffn"), flat, cfg.mlp_dim, meta.D), meta.shape))
    return Q


def lss_refine(grid: BEVGrid, params: ParamStore) -> BEVGrid:
    D = grid.meta.D
    h = relu(conv2d(grid.features, params.get("conv1.w", (3, 3, D, D)), params.bias("conv1.b", D), padding=1))
    out = conv2d(h, params.get("conv2.w", (3, 3, D, D)), params.bias("conv2.b", D), padding=1)
    return dataclasses.replace(grid, features=out)


def encode_bev(
    variant: str,
    scene: Scene,
    frame: int,
    prev: BEVGrid | None,
    cfg: EncoderConfig,
    params: ParamStore,
) -> BEVGrid:
    """
    Encode the rendered views of one frame into a BEV grid.
    bevformer warps `prev` by the ground-truth ego motion and attends to it; lss ignores `prev`.
    """
    if variant not in VARIANTS:
        raise EncoderContractError(f"unknown encoder variant {variant!r}, expected one of {VARIANTS}")
    if frame not in scene.views:
        raise EncoderContractError(f"frame {frame} of scene {scene.seed} has no rendered views")
    feats = encode_views(scene.views[frame], params.scope("stem"), cfg.meta.D, cfg.stem_hidden)

    if variant == "lss":
        grid = lss_encode(feats, scene.rig, cfg.meta, cfg.depth, params.scope("lss"), frame)
        return lss_refine(grid, params.scope("refine"))

    aligned = None
    if prev is not None:
        if prev.meta != cfg.meta:
            raise EncoderContractError(f"previous grid {prev.meta} does not match encoder grid {cfg.meta}")
        if prev.frame >= frame:
            raise EncoderContractError(f"previous grid is frame {prev.frame}, not before frame {frame}")
        aligned = warp_bev(prev, relative_pose(scene.pose(prev.frame), scene.pose(frame)))
    Q = bevformer_blocks(feats, scene, aligned, cfg, params.scope("bevformer"))
    return BEVGrid(cfg.meta, Q, frame, temporal=prev is not None)


def encode_scene(
    variant: str,
    scene: Scene,
    cfg: EncoderConfig,
    params: ParamStore,
    temporal: bool = True,
) -> list[BEVGrid]:
    """
    Encode every rendered frame in order. With `temporal`, each grid is fed
    (detached) as the previous frame of the next one.
    """
    grids: list[BEVGrid] = []
    prev: BEVGrid | None = None
    for frame in sorted(scene.views):
        grid = encode_bev(variant, scene, frame, prev if temporal else None, cfg, params)
        grids.append(grid)
        prev = grid.detach()
    return grids
