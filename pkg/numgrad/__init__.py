from numgrad.attention import (
    AttentionConfig,
    DeformableConfig,
    GridRangeError,
    deformable_attention,
    deformable_sampling,
    multi_head_attention,
)
from numgrad.blob import BlobError, decode_blob, encode_blob, read_blob, write_blob
from numgrad.gradcheck import GradCheckResult, grad_check
from numgrad.ops import (
    bilinear_sample,
    conv1d,
    conv2d,
    dropout,
    grouped_bilinear_sample,
    layer_norm,
    linear,
    log_softmax,
    scatter_add_pool,
    softmax,
)
from numgrad.optim import Adam, clip_grad_norm
from numgrad.params import ParamStore
from numgrad.tensor import (
    ConfigError,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    apply_op,
    backward,
    concat,
    eval_graph,
    precision,
)

__all__ = [
    "Adam",
    "AttentionConfig",
    "BlobError",
    "ConfigError",
    "DeformableConfig",
    "GradCheckResult",
    "GridRangeError",
    "NonFiniteError",
    "ParamStore",
    "ShapeError",
    "Tape",
    "Tensor",
    "apply_op",
    "backward",
    "bilinear_sample",
    "clip_grad_norm",
    "concat",
    "conv1d",
    "conv2d",
    "decode_blob",
    "deformable_attention",
    "deformable_sampling",
    "dropout",
    "encode_blob",
    "eval_graph",
    "grad_check",
    "grouped_bilinear_sample",
    "layer_norm",
    "linear",
    "log_softmax",
    "multi_head_attention",
    "precision",
    "read_blob",
    "scatter_add_pool",
    "softmax",
    "write_blob",
]
