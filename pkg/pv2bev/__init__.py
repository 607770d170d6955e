from pv2bev.bevformer import EncoderContractError, camera_hits, hit_counts, sca_layer, tsa_layer
from pv2bev.encoder import VARIANTS, EncoderConfig, encode_bev, encode_scene
from pv2bev.grid import BEVGrid, BEVGridMeta, load_bev, save_bev
from pv2bev.lss import DepthConfig, LiftedPointCloud, lift, lss_encode, splat
from pv2bev.stem import ViewFeatures, encode_views
from pv2bev.temporal import warp_bev

__all__ = [
    "VARIANTS",
    "BEVGrid",
    "BEVGridMeta",
    "DepthConfig",
    "EncoderConfig",
    "EncoderContractError",
    "LiftedPointCloud",
    "ViewFeatures",
    "camera_hits",
    "encode_bev",
    "encode_scene",
    "encode_views",
    "hit_counts",
    "lift",
    "load_bev",
    "lss_encode",
    "save_bev",
    "sca_layer",
    "splat",
    "tsa_layer",
    "warp_bev",
]
