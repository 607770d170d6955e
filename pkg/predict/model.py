from __future__ import annotations

import dataclasses
import logging

import numpy as np

from mapdec.decoder import DecodedMap
from numgrad.attention import AttentionConfig, multi_head_attention
from numgrad.layers import dense, mlp, norm
from numgrad.ops import softmax
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, concat, reshape, stack
from predict.lanes import encode_lanes_vectornet, lane_vertex_features, lane_vertices, s2_augment_vertices
from predict.patches import Patch, agent_bev_attention, agent_patch_index, patchify
from pv2bev.grid import BEVGrid
from synthscene.geometry import PERCEPTION_RANGE
from synthscene.scene import VectorMap

"""
Trajectory predictors: the lane-vector baseline and three ways of feeding BEV
features to it.

    baseline  history encoder, agent-agent and agent-lane attention
    s1        agent-lane attention replaced by agent-to-patch attention
    s2        baseline with lane vertices enriched by BEV samples
    s3        history encoder replaced by agent-to-patch attention over a temporal grid
"""

logger = logging.getLogger(__name__)

STRATEGIES = ("baseline", "s1", "s2", "s3")

# metres per unit of decoder output
OUT_SCALE = 10.0
# metres per unit of history displacement input
DISP_SCALE = 2.0


class StrategyInputError(ValueError):
    """A strategy called without the inputs it consumes"""

    def __init__(self, strategy: str, missing: str) -> None:
        self.strategy = strategy
        self.missing = missing
        super().__init__(strategy, missing)

    def __str__(self) -> str:
        return f"StrategyInputError: {self.strategy} needs {self.missing}"


# full-scale BEV attention rows: lr, weight decay, patch, mlp_dim, depth, heads, head_dim
ATTENTION_PRESETS = {
    "maptr": (5e-4, 1e-4, (20, 10), 512, 6, 16, 64),
    "maptrv2": (3.5e-4, 1e-2, (20, 10), 64, 6, 16, 64),
    "maptrv2-cl": (3.5e-4, 1e-2, (20, 20), 64, 4, 12, 32),
    "streammapnet": (3.5e-4, 1e-3, (10, 5), 128, 6, 16, 64),
}
# lane-enrichment rows: lr, weight decay, dropout
LANE_PRESETS = {
    "maptr": (1.5e-4, 0.05, 0.2),
    "maptrv2": (1.5e-4, 0.05, 0.2),
    "maptrv2-cl": (2e-4, 0.05, 0.2),
}
# temporal-grid row
TEMPORAL_PRESET = (5e-4, 1e-2, (10, 5), 128, 6, 16, 64)


@dataclasses.dataclass(frozen=True)
class PredictorConfig:
    d_model: int = 32
    heads: int = 4
    modes: int = 6
    t_h: int = 20
    t_f: int = 30
    lane_pts: int = 10
    mlp_dim: int = 64
    dropout: float = 0.1
    bev_attention: AttentionConfig = AttentionConfig(heads=4, head_dim=8, mlp_dim=64, depth=1)
    patch: Patch = (10, 10)
    lr: float = 5e-4
    weight_decay: float = 1e-2
    map_threshold: float = 0.4

    def __post_init__(self) -> None:
        if self.modes < 1 or self.t_h < 2 or self.t_f < 1 or self.lane_pts < 2:
            raise ConfigError(f"invalid predictor horizons or modes: {self}")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(heads=self.heads, head_dim=self.d_model // self.heads, mlp_dim=self.mlp_dim)

    @classmethod
    def preset(cls, model: str, strategy: str = "s1", **overrides) -> PredictorConfig:
        """Full-scale hyperparameters of one mapping model / strategy pairing"""
        if strategy == "s2":
            if model not in LANE_PRESETS:
                raise ConfigError(f"no lane-enrichment preset for {model!r}")
            lr, wd, p = LANE_PRESETS[model]
            return cls(lr=lr, weight_decay=wd, dropout=p, **overrides)
        if strategy == "s3":
            row = TEMPORAL_PRESET
        elif model in ATTENTION_PRESETS:
            row = ATTENTION_PRESETS[model]
        else:
            raise ConfigError(f"unknown mapping model {model!r}, expected one of {sorted(ATTENTION_PRESETS)}")
        lr, wd, patch, mlp_dim, depth, heads, head_dim = row
        attn = AttentionConfig(heads=heads, head_dim=head_dim, mlp_dim=mlp_dim, depth=depth)
        return cls(lr=lr, weight_decay=wd, patch=patch, bev_attention=attn, **overrides)


@dataclasses.dataclass(frozen=True, eq=False)
class AgentContext:
    agent_ids: tuple[int, ...]
    positions: np.ndarray  # M x 2, ego frame at the prediction time
    histories: np.ndarray | None = None  # M x T_h x 2

    def __post_init__(self) -> None:
        if len(self.agent_ids) < 1:
            raise ConfigError("need at least one agent")
        if self.positions.shape != (len(self.agent_ids), 2):
            raise ConfigError(f"positions {self.positions.shape} for {len(self.agent_ids)} agents")

    def __len__(self) -> int:
        return len(self.agent_ids)


@dataclasses.dataclass(frozen=True, eq=False)
class PredictionSet:
    agent_ids: tuple[int, ...]
    trajectories: Tensor  # M x K x T_f x 2, metres
    logits: Tensor  # M x K

    @property
    def scores(self) -> np.ndarray:
        return softmax(self.logits.detach(), axis=-1).data

    @property
    def modes(self) -> int:
        return self.trajectories.shape[1]


def as_vector_map(lanes: DecodedMap | VectorMap | None, threshold: float) -> VectorMap | None:
    if isinstance(lanes, DecodedMap):
        vmap, _ = lanes.to_vector_map(threshold)
        return vmap
    return lanes


def history_encoder(histories: np.ndarray, positions: np.ndarray, cfg: PredictorConfig, params: ParamStore, rng) -> Tensor:
    """MLP over the flattened per-step displacements and the current position"""
    disp = np.diff(np.asarray(histories, dtype=np.float64), axis=1).reshape(len(positions), -1) / DISP_SCALE
    pos = positions / PERCEPTION_RANGE.half_extent
    x = Tensor(np.concatenate([disp, pos], axis=1))
    return mlp(params, x, cfg.mlp_dim, cfg.d_model, cfg.dropout, rng)


def bev_context(positions: np.ndarray, bev: BEVGrid, cfg: PredictorConfig, params: ParamStore) -> Tensor:
    """agent-to-patch attention stack, projected to d_model"""
    attn = cfg.bev_attention
    patches = patchify(bev, cfg.patch, attn.embed_dim, params.scope("patch"))
    idx = agent_patch_index(positions, bev.meta, cfg.patch)
    tokens = patches.embeddings
    x = tokens[idx]
    for b in range(attn.depth):
        block = params.scope(f"block{b}")
        if b == 0:
            attended = agent_bev_attention(idx, patches, attn, block.scope("attn"))
        else:
            # later blocks query with the refined agent tokens
            attended = multi_head_attention(x, tokens, tokens, attn, block.scope("attn"))
        x = norm(block.scope("ln1"), x + attended)
        x = norm(block.scope("ln2"), x + mlp(block.scope("ffn"), x, attn.mlp_dim, attn.embed_dim))
    return dense(params.scope("out"), x, cfg.d_model)


def lane_context(
    vmap: VectorMap,
    cfg: PredictorConfig,
    params: ParamStore,
    bev: BEVGrid | None = None,
) -> Tensor:
    feats = lane_vertex_features(vmap, cfg.lane_pts)
    extra = None
    if bev is not None:
        augmented = s2_augment_vertices(lane_vertices(vmap, cfg.lane_pts), bev, params.scope("s2"), cfg.d_model)
        extra = augmented.features[..., 2:]
    return encode_lanes_vectornet(feats, params.scope("vectornet"), cfg.d_model, extra)


def attend(x: Tensor, context: Tensor, cfg: PredictorConfig, params: ParamStore) -> Tensor:
    """residual cross-attention; an empty context leaves x unchanged"""
    if context.shape[0] == 0:
        return x
    return norm(params.scope("ln"), x + multi_head_attention(x, context, context, cfg.attention, params.scope("mha")))


def mode_decoder(h: Tensor, positions: np.ndarray, cfg: PredictorConfig, params: ParamStore, rng):
    """K parallel MLP heads, each regressing a full future around the current position"""
    M = h.shape[0]
    trajs = []
    for k in range(cfg.modes):
        out = mlp(params.scope(f"mode{k}"), h, cfg.mlp_dim, cfg.t_f * 2, cfg.dropout, rng)
        trajs.append(reshape(out, (M, cfg.t_f, 2)) * OUT_SCALE + positions[:, None, :])
    logits = dense(params.scope("score"), h, cfg.modes)
    return stack(trajs, axis=1), logits


def check_inputs(strategy: str, ctx: AgentContext, vmap, bev: BEVGrid | None, ablate: bool) -> None:
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    needs_history = strategy != "s3"
    needs_map = strategy != "s1"
    needs_bev = strategy != "baseline"
    if needs_history and ctx.histories is None:
        raise StrategyInputError(strategy, "agent histories")
    if needs_map and vmap is None:
        raise StrategyInputError(strategy, "a decoded map")
    if needs_bev and bev is None:
        raise StrategyInputError(strategy, "a BEV grid")
    if strategy == "s3" and not bev.temporal and not ablate:
        raise StrategyInputError(strategy, "a temporal BEV grid (or ablate=True)")


def forward_predict(
    strategy: str,
    ctx: AgentContext,
    params: ParamStore,
    cfg: PredictorConfig = PredictorConfig(),
    lanes: DecodedMap | VectorMap | None = None,
    bev: BEVGrid | None = None,
    ablate: bool = False,
    rng: np.random.Generator | None = None,
) -> PredictionSet:
    """
    Predict K futures per agent. Only the inputs the strategy consumes are read:
    s1 never touches `lanes`, s3 never touches the histories. `rng` enables
    dropout (training); without it the forward is deterministic.
    """
    vmap = as_vector_map(lanes, cfg.map_threshold)
    check_inputs(strategy, ctx, vmap, bev, ablate)
    if ctx.histories is not None and strategy != "s3" and ctx.histories.shape[1] != cfg.t_h:
        raise ConfigError(f"histories span {ctx.histories.shape[1]} steps, predictor expects {cfg.t_h}")
    positions = np.asarray(ctx.positions, dtype=np.float64)
    pos_norm = positions / PERCEPTION_RANGE.half_extent

    if strategy == "s3":
        e_A = bev_context(positions, bev, cfg, params.scope("bev"))
        h = dense(params.scope("agent"), concat([e_A, Tensor(pos_norm, dtype=e_A.dtype)], axis=1), cfg.d_model)
    else:
        h = history_encoder(ctx.histories, positions, cfg, params.scope("history"), rng)

    h = attend(h, h, cfg, params.scope("agent_agent"))
    if strategy == "s1":
        e_A = bev_context(positions, bev, cfg, params.scope("bev"))
        h = dense(params.scope("fuse"), concat([h, e_A], axis=1), cfg.d_model)
    else:
        lane_tokens = lane_context(vmap, cfg, params.scope("lanes"), bev if strategy == "s2" else None)
        h = attend(h, lane_tokens, cfg, params.scope("agent_lane"))
    h = attend(h, h, cfg, params.scope("global"))
    h = norm(params.scope("ffn_ln"), h + mlp(params.scope("ffn"), h, cfg.mlp_dim, cfg.d_model, cfg.dropout, rng))
    trajectories, logits = mode_decoder(h, positions, cfg, params.scope("decoder"), rng)
    logger.debug("%s forward: %d agents, %d modes", strategy, len(ctx), cfg.modes)
    return PredictionSet(tuple(ctx.agent_ids), trajectories, logits)
