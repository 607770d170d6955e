from __future__ import annotations

import csv
import dataclasses
import logging
import pathlib
from typing import Sequence

import numpy as np

from clibench.config import RUN_CONFIG, RunConfig
from mapdec.decoder import DecodedMap, decode_bev
from mapdec.matching import map_matching_loss
from mapdec.metrics import EmptyMapError, mean_chamfer
from numgrad.optim import Adam
from numgrad.params import ParamStore
from numgrad.tensor import NonFiniteError, Tensor, backward
from predict.losses import wta_loss
from predict.metrics import MetricsReport, compute_metrics, write_metrics_csv
from predict.model import AgentContext, forward_predict
from pv2bev.encoder import encode_bev, encode_scene
from pv2bev.grid import BEVGrid
from synthscene.dataset import read_dataset
from synthscene.scene import Scene, VectorMap

"""
Training and evaluation loops: the map model (encoder + decoder) and the
trajectory predictors on top of a frozen map model.
"""

logger = logging.getLogger(__name__)

MAP_ROLE = "map"
CHECKPOINT = "checkpoint"
TRAINING_LOG = "training_log.csv"
GRAD_CLIP = 1.0


class ManifestMismatch(ValueError):
    """A checkpoint whose manifest was written for another model"""

    def __init__(self, path, expected: str, found: str) -> None:
        self.path = str(path)
        self.expected = expected
        self.found = found
        super().__init__(self.path, expected, found)

    def __str__(self) -> str:
        return f"ManifestMismatch: {self.path} holds {self.found!r}, expected {self.expected!r}"


class EmptySplitError(ValueError):
    """A split with nothing to train or score on"""

    def __init__(self, path, reason: str) -> None:
        self.path = str(path)
        self.reason = reason
        super().__init__(self.path, reason)

    def __str__(self) -> str:
        return f"EmptySplitError: {self.path}: {self.reason}"


class TrainingDiverged(ArithmeticError):
    """Non-finite loss or gradient; `batch` is `<epoch>:<scene seed>`"""

    def __init__(self, batch: str, loss: float) -> None:
        self.batch = batch
        self.loss = loss
        super().__init__(batch, loss)

    def __str__(self) -> str:
        return f"TrainingDiverged: loss {self.loss} at batch {self.batch}"


@dataclasses.dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val: dict[str, float]


@dataclasses.dataclass(frozen=True, eq=False)
class TrainResult:
    params: ParamStore
    log: tuple[EpochLog, ...]
    checkpoint: pathlib.Path
    best: float


def predictor_role(strategy: str) -> str:
    return f"predictor-{strategy}"


def load_split(path: str | pathlib.Path) -> list[Scene]:
    path = pathlib.Path(path)
    if not path.exists():
        raise EmptySplitError(path, "no such dataset file, run `gen` first")
    scenes = read_dataset(path)
    if not scenes:
        raise EmptySplitError(path, "split holds no scenes")
    return scenes


def write_training_log(log: Sequence[EpochLog], path: str | pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    keys = sorted(log[0].val) if log else []
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "train_loss"] + [f"val_{k}" for k in keys])
        for row in log:
            writer.writerow([row.epoch, f"{row.train_loss:.6f}"] + [f"{row.val[k]:.6f}" for k in keys])
    return path


def optimise(opt: Adam, loss: Tensor, batch: str) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingDiverged(batch, value)
    opt.zero_grad()
    backward(loss)
    try:
        opt.step()
    except NonFiniteError as exc:
        raise TrainingDiverged(batch, value) from exc
    return value


# map model


def map_forward(scene: Scene, cfg: RunConfig, params: ParamStore) -> tuple[BEVGrid, DecodedMap]:
    """encode the rendered frames (streaming when temporal) and decode the prediction-time grid"""
    enc = cfg.encoder_config()
    if cfg.temporal:
        bev = encode_scene(cfg.variant, scene, enc, params.scope("encoder"))[-1]
    else:
        bev = encode_bev(cfg.variant, scene, scene.current_frame, None, enc, params.scope("encoder"))
    return bev, decode_bev(bev, cfg.decoder_config(), params.scope("decoder"))


def map_chamfer(scenes: Sequence[Scene], cfg: RunConfig, params: ParamStore) -> float:
    dec = cfg.decoder_config()
    scores = []
    for scene in scenes:
        _, decoded = map_forward(scene, cfg, params)
        vmap, _ = decoded.to_vector_map(dec.score_threshold, dec.classes)
        try:
            scores.append(mean_chamfer(vmap, dec.target(scene.gt_map)))
        except EmptyMapError:
            continue
    return float(np.mean(scores)) if scores else float("inf")


def train_map(cfg: RunConfig, out: str | pathlib.Path) -> TrainResult:
    """
    Joint encoder + decoder training with the matching loss, one scene per step.
    The checkpoint keeps the epoch with the lowest mean validation Chamfer distance.
    """
    out = pathlib.Path(out)
    train, val = load_split(cfg.split_path("train")), load_split(cfg.split_path("val"))
    dec = cfg.decoder_config()
    params = ParamStore(seed=cfg.seed)
    map_forward(train[0], cfg, params)
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay, clip=GRAD_CLIP)
    order = np.random.default_rng(cfg.seed)
    ckpt = out / CHECKPOINT
    log: list[EpochLog] = []
    best = float("inf")
    for epoch in range(cfg.epochs):
        losses = []
        for i in order.permutation(len(train)):
            scene = train[i]
            _, decoded = map_forward(scene, cfg, params)
            loss = map_matching_loss(decoded, dec.target(scene.gt_map), dec.cls_weight, dec.reg_weight)
            losses.append(optimise(opt, loss, f"{epoch}:{scene.seed}"))
        chamfer = map_chamfer(val, cfg, params)
        log.append(EpochLog(epoch, float(np.mean(losses)), {"chamfer": chamfer}))
        logger.info("map epoch %d: loss %.4f, val chamfer %.3f m", epoch, log[-1].train_loss, chamfer)
        if chamfer < best or not ckpt.exists():
            best = min(best, chamfer)
            params.save(ckpt, MAP_ROLE, {"variant": cfg.variant, "epoch": epoch, "chamfer": chamfer})
    if not ckpt.exists():
        params.save(ckpt, MAP_ROLE, {"variant": cfg.variant, "epoch": -1})
    cfg.save(out)
    cfg.save(ckpt)
    write_training_log(log, out / TRAINING_LOG)
    return TrainResult(params, tuple(log), ckpt, best)


# predictors


@dataclasses.dataclass(frozen=True, eq=False)
class SceneSample:
    seed: int
    ctx: AgentContext
    futures: np.ndarray  # M x T_f x 2
    bev: BEVGrid | None
    lanes: VectorMap | None


def load_map_model(cfg: RunConfig) -> tuple[ParamStore, RunConfig]:
    """The frozen map model a predictor runs on, and the run config it was trained with"""
    if cfg.map_ckpt is None:
        logger.warning(
            "no map checkpoint: BEV features and decoded lanes come from an untrained map model (seed %d)", cfg.seed
        )
        return ParamStore(seed=cfg.seed), cfg
    meta, _ = ParamStore.read_manifest(cfg.map_ckpt)
    if meta.get("role") != MAP_ROLE:
        raise ManifestMismatch(cfg.map_ckpt, MAP_ROLE, meta.get("role", "?"))
    params, _ = ParamStore.load(cfg.map_ckpt)
    map_cfg = RunConfig.load(cfg.map_ckpt)
    return params, map_cfg


def scene_sample(scene: Scene, cfg: RunConfig, map_params: ParamStore, map_cfg: RunConfig) -> SceneSample | None:
    """
    Agents inside the perception range with their histories and futures, plus
    the frozen map model outputs the strategy consumes. Lanes are decoded by the
    map model unless `oracle_lanes` substitutes the ground-truth map.
    """
    agents = scene.agents_in_range()
    if not agents:
        return None
    ctx = AgentContext(
        tuple(a.agent_id for a in agents),
        np.stack([a.position for a in agents]),
        np.stack([a.history for a in agents]),
    )
    futures = np.stack([a.future for a in agents])
    bev: BEVGrid | None = None
    lanes: VectorMap | None = None
    if cfg.strategy != "baseline" or not cfg.oracle_lanes:
        enc = map_cfg.encoder_config()
        encoder = map_params.scope("encoder")
        if map_cfg.variant == "bevformer" and cfg.temporal and not cfg.ablate:
            bev = encode_scene(map_cfg.variant, scene, enc, encoder)[-1].detach()
        else:
            bev = encode_bev(map_cfg.variant, scene, scene.current_frame, None, enc, encoder).detach()
    if cfg.strategy != "s1":
        dec = map_cfg.decoder_config()
        if cfg.oracle_lanes:
            lanes = dec.target(scene.gt_map)
        else:
            decoded = decode_bev(bev, dec, map_params.scope("decoder"))
            lanes, _ = decoded.to_vector_map(dec.score_threshold, dec.classes)
    return SceneSample(scene.seed, ctx, futures, bev if cfg.strategy != "baseline" else None, lanes)


def build_samples(scenes: Sequence[Scene], cfg: RunConfig) -> list[SceneSample]:
    if cfg.strategy == "baseline" and cfg.oracle_lanes:
        # ground-truth lanes only, the map model is never run
        map_params, map_cfg = ParamStore(seed=cfg.seed), cfg
    else:
        map_params, map_cfg = load_map_model(cfg)
    samples = [s for s in (scene_sample(scene, cfg, map_params, map_cfg) for scene in scenes) if s is not None]
    logger.info("%d of %d scenes have agents in range", len(samples), len(scenes))
    return samples


def predict_sample(sample: SceneSample, cfg: RunConfig, params: ParamStore, rng=None):
    return forward_predict(
        cfg.strategy,
        sample.ctx,
        params,
        cfg.predictor_config(),
        lanes=sample.lanes,
        bev=sample.bev,
        ablate=cfg.ablate,
        rng=rng,
    )


def score_samples(samples: Sequence[SceneSample], cfg: RunConfig, params: ParamStore) -> MetricsReport:
    reports = []
    for sample in samples:
        pred = predict_sample(sample, cfg, params)
        ids = [f"{sample.seed}:{i}" for i in sample.ctx.agent_ids]
        reports.append(compute_metrics(pred, sample.futures, agent_ids=ids))
    return MetricsReport.merge(reports)


def train_predictor(cfg: RunConfig, out: str | pathlib.Path) -> TrainResult:
    """
    Winner-takes-all training of one strategy, one scene per step, dropout
    seeded from the run seed. The checkpoint keeps the epoch with the best
    validation minFDE.
    """
    out = pathlib.Path(out)
    train = build_samples(load_split(cfg.split_path("train")), cfg)
    val = build_samples(load_split(cfg.split_path("val")), cfg)
    if not train:
        raise EmptySplitError(cfg.split_path("train"), "no agents inside the perception range")
    if not val:
        raise EmptySplitError(cfg.split_path("val"), "no agents inside the perception range")
    params = ParamStore(seed=cfg.seed)
    predict_sample(train[0], cfg, params)
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay, clip=GRAD_CLIP)
    order = np.random.default_rng(cfg.seed)
    dropout = np.random.default_rng([cfg.seed, 1])
    role = predictor_role(cfg.strategy)
    ckpt = out / CHECKPOINT
    log: list[EpochLog] = []
    best = float("inf")
    for epoch in range(cfg.epochs):
        losses = []
        for i in order.permutation(len(train)):
            sample = train[i]
            loss = wta_loss(predict_sample(sample, cfg, params, dropout), sample.futures)
            losses.append(optimise(opt, loss, f"{epoch}:{sample.seed}"))
        report = score_samples(val, cfg, params)
        val_metrics = {"minADE": report.min_ade, "minFDE": report.min_fde, "MR": report.miss_rate}
        log.append(EpochLog(epoch, float(np.mean(losses)), val_metrics))
        logger.info("%s epoch %d: loss %.4f, val minFDE %.3f m", cfg.strategy, epoch, log[-1].train_loss, report.min_fde)
        if report.min_fde < best or not ckpt.exists():
            best = min(best, report.min_fde)
            params.save(ckpt, role, {"strategy": cfg.strategy, "ablate": cfg.ablate, "epoch": epoch})
    if not ckpt.exists():
        params.save(ckpt, role, {"strategy": cfg.strategy, "ablate": cfg.ablate, "epoch": -1})
    cfg.save(out)
    cfg.save(ckpt)
    write_training_log(log, out / TRAINING_LOG)
    return TrainResult(params, tuple(log), ckpt, best)


def evaluate(
    ckpt: str | pathlib.Path,
    split: str | pathlib.Path,
    strategy: str | None = None,
    out: str | pathlib.Path | None = None,
) -> MetricsReport:
    """
    Score a predictor checkpoint on a split ("train", "val" or a dataset path).
    The checkpoint's manifest must name a predictor, and `strategy` when given.
    """
    ckpt = pathlib.Path(ckpt)
    meta, _ = ParamStore.read_manifest(ckpt)
    role = meta.get("role", "?")
    expected = predictor_role(strategy) if strategy else role
    if not role.startswith("predictor-") or role != expected:
        raise ManifestMismatch(ckpt, expected if strategy else "predictor-*", role)
    if not (ckpt / RUN_CONFIG).exists():
        raise ManifestMismatch(ckpt, RUN_CONFIG, "no run config")
    cfg = RunConfig.load(ckpt)
    if predictor_role(cfg.strategy) != role:
        raise ManifestMismatch(ckpt, role, predictor_role(cfg.strategy))
    path = cfg.split_path(str(split)) if str(split) in ("train", "val") else pathlib.Path(split)
    samples = build_samples(load_split(path), cfg)
    if not samples:
        raise EmptySplitError(path, "no agents inside the perception range")
    params, _ = ParamStore.load(ckpt)
    report = score_samples(samples, cfg, params)
    logger.info("%s on %s: %s", role, path, report.summary())
    if out is not None:
        write_metrics_csv(report, out)
        cfg.save(pathlib.Path(out).parent)
    return report
