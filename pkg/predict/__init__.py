from predict.lanes import AugmentedVertices, encode_lanes_vectornet, lane_vertex_features, s2_augment_vertices
from predict.losses import wta_loss, wta_terms
from predict.metrics import (
    AgentMetrics,
    MetricsError,
    MetricsReport,
    compute_metrics,
    read_metrics_csv,
    write_metrics_csv,
)
from predict.model import (
    STRATEGIES,
    AgentContext,
    PredictionSet,
    PredictorConfig,
    StrategyInputError,
    forward_predict,
)
from predict.patches import (
    PatchConfigError,
    PatchEmbeds,
    agent_bev_attention,
    agent_patch_index,
    patch_count,
    patchify,
)

__all__ = [
    "STRATEGIES",
    "AgentContext",
    "AgentMetrics",
    "AugmentedVertices",
    "MetricsError",
    "MetricsReport",
    "PatchConfigError",
    "PatchEmbeds",
    "PredictionSet",
    "PredictorConfig",
    "StrategyInputError",
    "agent_bev_attention",
    "agent_patch_index",
    "compute_metrics",
    "encode_lanes_vectornet",
    "forward_predict",
    "lane_vertex_features",
    "patch_count",
    "patchify",
    "read_metrics_csv",
    "s2_augment_vertices",
    "wta_loss",
    "wta_terms",
]
