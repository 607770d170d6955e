from __future__ import annotations

import concurrent.futures
import dataclasses
import logging
import pathlib

import click

from clibench.bench import PIPELINES, run_benchmark_grid, write_bench_csv
from clibench.config import RUN_CONFIG, TRAIN_SPLIT, VAL_SPLIT, RunConfig
from clibench.train import evaluate, load_map_model, load_split, train_map, train_predictor
from clibench.viz import pca_grayscale, write_pgm
from predict.model import STRATEGIES
from pv2bev.encoder import VARIANTS, encode_bev, encode_scene
from pv2bev.grid import load_bev, save_bev
from synthscene.dataset import write_dataset
from synthscene.scene import generate_scene, generate_scenes

"""
Command-line surface. Run-producing commands leave run_config.json beside their outputs.
"""

logger = logging.getLogger(__name__)


class IntList(click.ParamType):
    """comma separated integers, `2,8,32`"""

    name = "ints"

    def __init__(self, length: int | None = None) -> None:
        self.length = length

    def convert(self, value, param, ctx):
        if isinstance(value, (tuple, list)):
            return tuple(value)
        try:
            out = tuple(int(v) for v in str(value).split(","))
        except ValueError:
            self.fail(f"{value!r} is not a comma separated list of integers", param, ctx)
        if self.length is not None and len(out) != self.length:
            self.fail(f"{value!r} needs exactly {self.length} values", param, ctx)
        return out


def base_config(data: str | None) -> RunConfig:
    """the run config `gen` left in the data directory, or the defaults"""
    if data is not None and (pathlib.Path(data) / RUN_CONFIG).exists():
        return RunConfig.load(data)
    return RunConfig() if data is None else RunConfig(data_dir=data)


def overrides(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, **{k: v for k, v in kw.items() if v is not None})


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output")
def main(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scenes", type=int, default=64, show_default=True, help="training scenes")
@click.option("--val-scenes", type=int, default=16, show_default=True)
@click.option("--agents", type=int, default=8, show_default=True)
@click.option("--hz", type=int, default=10, show_default=True)
@click.option("--image", "image", type=IntList(2), default="32,48", show_default=True, help="rows,cols per camera")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def gen(seed: int, scenes: int, val_scenes: int, agents: int, hz: int, image, workers: int, out: str) -> None:
    """Generate the train and val splits."""
    cfg = RunConfig(
        seed=seed,
        train_scenes=scenes,
        val_scenes=val_scenes,
        agents=agents,
        hz=hz,
        image_rows=image[0],
        image_cols=image[1],
        data_dir=out,
    )
    scene_cfg = cfg.scene_config()
    pathlib.Path(out).mkdir(parents=True, exist_ok=True)
    for split, name in (("train", TRAIN_SPLIT), ("val", VAL_SPLIT)):
        seeds = list(cfg.split_seeds(split))
        logger.info("generating %d %s scenes with %d workers", len(seeds), split, workers)
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(workers) as pool:
                generated = list(pool.map(generate_scene, seeds, [scene_cfg] * len(seeds)))
        else:
            generated = generate_scenes(seeds, scene_cfg)
        size = write_dataset(generated, pathlib.Path(out) / name)
        click.echo(f"{split}: {len(generated)} scenes, {size} bytes")
    cfg.save(out)


@main.command("train-map")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--variant", type=click.Choice(VARIANTS), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--bev", type=IntList(3), default=None, help="H,W,D")
@click.option("--temporal/--single-frame", default=None)
@click.option("--centerlines/--no-centerlines", default=None, help="decode centerlines as a fourth class")
@click.option("--seed", type=int, default=None)
def train_map_cmd(data, out, variant, epochs, lr, weight_decay, bev, temporal, centerlines, seed) -> None:
    """Train the BEV encoder and map decoder."""
    cfg = overrides(
        base_config(data),
        data_dir=data,
        out_dir=out,
        variant=variant,
        epochs=epochs,
        lr=lr,
        weight_decay=weight_decay,
        bev=bev,
        temporal=temporal,
        centerlines=centerlines,
        seed=seed,
    )
    result = train_map(cfg, out)
    click.echo(f"checkpoint {result.checkpoint}, best val chamfer {result.best:.4f} m")


@main.command("train-pred")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--strategy", type=click.Choice(STRATEGIES), required=True)
@click.option("--patch", type=IntList(2), default=None, help="PH,PW")
@click.option("--map-ckpt", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--ablate", is_flag=True, help="single-frame BEV for s3")
@click.option("--oracle-lanes", is_flag=True, help="ground-truth lanes instead of decoded ones")
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--dropout", type=float, default=None)
@click.option("--bev", type=IntList(3), default=None, help="H,W,D, only without --map-ckpt")
@click.option("--seed", type=int, default=None)
def train_pred_cmd(
    data, out, strategy, patch, map_ckpt, ablate, oracle_lanes, epochs, lr, weight_decay, dropout, bev, seed
) -> None:
    """Train one trajectory predictor on a frozen map model."""
    cfg = overrides(
        base_config(data),
        data_dir=data,
        out_dir=out,
        strategy=strategy,
        patch=patch,
        map_ckpt=map_ckpt,
        ablate=ablate,
        oracle_lanes=oracle_lanes,
        epochs=epochs,
        lr=lr,
        weight_decay=weight_decay,
        dropout=dropout,
        bev=bev,
        seed=seed,
    )
    if map_ckpt is not None:
        # the grid is whatever the map model was trained on
        map_cfg = RunConfig.load(map_ckpt)
        cfg = dataclasses.replace(cfg, bev=map_cfg.bev, variant=map_cfg.variant)
    result = train_predictor(cfg, out)
    click.echo(f"checkpoint {result.checkpoint}, best val minFDE {result.best:.4f} m")


@main.command("eval")
@click.option("--ckpt", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--split", default="val", show_default=True, help="train, val or a dataset file")
@click.option("--strategy", type=click.Choice(STRATEGIES), default=None, help="fail unless the checkpoint holds it")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="per-agent metrics CSV")
def eval_cmd(ckpt, split, strategy, out) -> None:
    """Score a predictor checkpoint."""
    report = evaluate(ckpt, split, strategy, out)
    s = report.summary()
    click.echo(f"minADE {s['minADE']:.4f}  minFDE {s['minFDE']:.4f}  MR {s['MR']:.4f}  agents {s['agents']}")


@main.command()
@click.option("--agents", type=IntList(), default="2,8,32", show_default=True)
@click.option("--elements", type=IntList(), default="5,20,40,60", show_default=True)
@click.option("--pipelines", default=",".join(PIPELINES), show_default=True)
@click.option("--runs", type=int, default=31, show_default=True)
@click.option("--warmup", type=int, default=5, show_default=True)
@click.option("--variant", type=click.Choice(VARIANTS), default="lss", show_default=True)
@click.option("--bev", type=IntList(3), default=None, help="H,W,D")
@click.option("--patch", type=IntList(2), default=None, help="PH,PW")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def bench(agents, elements, pipelines, runs, warmup, variant, bev, patch, seed, out) -> None:
    """Latency grid of the decoupled and integrated pipelines."""
    cfg = overrides(RunConfig(seed=seed, variant=variant), bev=bev, patch=patch)
    rows = run_benchmark_grid(agents, elements, tuple(pipelines.split(",")), runs, cfg, warmup)
    path = write_bench_csv(rows, out, cfg)
    cfg.save(path.parent)
    click.echo(f"{len(rows)} rows written to {path}")


@main.command("dump-bev")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--split", default="val", show_default=True)
@click.option("--index", type=int, default=0, show_default=True, help="scene index in the split")
@click.option("--map-ckpt", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def dump_bev(data, split, index, map_ckpt, out) -> None:
    """Encode one scene at the prediction frame and write its BEV grid."""
    cfg = overrides(base_config(data), data_dir=data, map_ckpt=map_ckpt)
    scenes = load_split(cfg.split_path(split))
    if not 0 <= index < len(scenes):
        raise click.BadParameter(f"scene index {index} outside a split of {len(scenes)}", param_hint="--index")
    params, map_cfg = load_map_model(cfg)
    scene = scenes[index]
    enc = map_cfg.encoder_config()
    if map_cfg.variant == "bevformer" and map_cfg.temporal:
        grid = encode_scene(map_cfg.variant, scene, enc, params.scope("encoder"))[-1]
    else:
        grid = encode_bev(map_cfg.variant, scene, scene.current_frame, None, enc, params.scope("encoder"))
    path = save_bev(grid.detach(), out)
    cfg.save(path.parent)
    click.echo(f"scene {scene.seed} frame {grid.frame} -> {path}")


@main.command("viz-bev")
@click.option("--in", "src", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def viz_bev(src, out) -> None:
    """First-principal-component grayscale of a BEV grid, as binary PGM."""
    grid = load_bev(src)
    path = write_pgm(pca_grayscale(grid), out)
    click.echo(f"{grid.meta.H}x{grid.meta.W} -> {path}")


def run(args: list[str] | None = None) -> None:
    main.main(args=args, prog_name="bevflow")
