from __future__ import annotations

import dataclasses
import json
import logging
import pathlib

from mapdec.decoder import DecoderConfig
from numgrad.attention import AttentionConfig, DeformableConfig
from numgrad.tensor import ConfigError
from predict.model import STRATEGIES, PredictorConfig
from pv2bev.encoder import VARIANTS, EncoderConfig
from pv2bev.grid import BEVGridMeta
from synthscene.scene import SceneConfig

"""
One run configuration, persisted verbatim as run_config.json beside every output it produces.
"""

logger = logging.getLogger(__name__)

RUN_CONFIG = "run_config.json"
TRAIN_SPLIT = "train.scenes"
VAL_SPLIT = "val.scenes"
# val seeds start this far after the train seeds of the same run seed
VAL_SEED_OFFSET = 500_000


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    train_scenes: int = 64
    val_scenes: int = 16
    hz: int = 10
    agents: int = 8
    image_rows: int = 32
    image_cols: int = 48
    variant: str = "bevformer"
    strategy: str = "s1"
    temporal: bool = True
    ablate: bool = False
    patch: tuple[int, int] = (10, 10)
    epochs: int = 10
    lr: float = 5e-4
    weight_decay: float = 1e-2
    dropout: float = 0.1
    bev: tuple[int, int, int] = (100, 50, 32)
    map_instances: int = 12
    centerlines: bool = True
    oracle_lanes: bool = False
    data_dir: str = "data"
    out_dir: str = "runs"
    map_ckpt: str | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}, expected one of {VARIANTS}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.train_scenes < 0 or self.val_scenes < 0 or self.epochs < 0:
            raise ConfigError(f"scene counts and epochs must be non-negative: {self}")
        if self.lr < 0:
            raise ConfigError(f"learning rate {self.lr} is negative")
        if self.oracle_lanes and self.strategy == "s1":
            raise ConfigError("oracle_lanes needs a strategy that reads lanes, s1 reads none")
        # tuples come back from JSON as lists
        object.__setattr__(self, "patch", tuple(self.patch))
        object.__setattr__(self, "bev", tuple(self.bev))

    # derived component configs

    @property
    def meta(self) -> BEVGridMeta:
        H, W, D = self.bev
        return BEVGridMeta(H=H, W=W, D=D)

    def scene_config(self) -> SceneConfig:
        return SceneConfig(agents=self.agents, hz=self.hz, image_rows=self.image_rows, image_cols=self.image_cols)

    def encoder_config(self) -> EncoderConfig:
        D = self.meta.D
        heads = 4 if D % 4 == 0 else 2
        return EncoderConfig(meta=self.meta, deform=DeformableConfig(heads=heads), mlp_dim=2 * D)

    def decoder_config(self) -> DecoderConfig:
        D = self.meta.D
        heads = 4 if D % 4 == 0 else 2
        return DecoderConfig(
            n_inst=self.map_instances,
            heads=heads,
            deform=DeformableConfig(heads=heads),
            mlp_dim=2 * D,
            with_centerlines=self.centerlines,
        )

    def predictor_config(self) -> PredictorConfig:
        scene = self.scene_config()
        return PredictorConfig(
            t_h=scene.t_h,
            t_f=scene.t_f,
            dropout=self.dropout,
            patch=self.patch,
            lr=self.lr,
            weight_decay=self.weight_decay,
            bev_attention=AttentionConfig(heads=4, head_dim=8, mlp_dim=64, depth=1),
        )

    # persistence

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        raw = json.loads(text)
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown run config keys {sorted(unknown)}")
        return cls(**raw)

    def save(self, directory: str | pathlib.Path) -> pathlib.Path:
        path = pathlib.Path(directory) / RUN_CONFIG
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        logger.debug("run config written to %s", path)
        return path

    @classmethod
    def load(cls, directory: str | pathlib.Path) -> RunConfig:
        return cls.from_json((pathlib.Path(directory) / RUN_CONFIG).read_text())

    def split_path(self, split: str) -> pathlib.Path:
        return pathlib.Path(self.data_dir) / (TRAIN_SPLIT if split == "train" else VAL_SPLIT)

    def split_seeds(self, split: str) -> range:
        base = self.seed * 1_000_000 + (VAL_SEED_OFFSET if split == "val" else 0)
        return range(base, base + (self.val_scenes if split == "val" else self.train_scenes))
