from mapdec.decoder import (
    DECODER_CLASSES,
    DecodedMap,
    DecoderConfig,
    MapQuerySet,
    decode_bev,
    decode_map,
    format_decoded,
)
from mapdec.matching import MatchingError, hungarian_match, map_matching_loss, match_map
from mapdec.metrics import EmptyMapError, chamfer_distance, class_chamfer, mean_chamfer

__all__ = [
    "DECODER_CLASSES",
    "DecodedMap",
    "DecoderConfig",
    "EmptyMapError",
    "MapQuerySet",
    "MatchingError",
    "chamfer_distance",
    "class_chamfer",
    "decode_bev",
    "decode_map",
    "format_decoded",
    "hungarian_match",
    "map_matching_loss",
    "match_map",
    "mean_chamfer",
]
