import dataclasses

import numpy as np
import pytest
from click.testing import CliRunner

from clibench.bench import run_benchmark_grid
from clibench.cli import main
from clibench.config import TRAIN_SPLIT, VAL_SPLIT, RunConfig
from clibench.train import train_map, train_predictor
from numgrad.params import ParamStore
from synthscene.dataset import write_dataset
from synthscene.scene import generate_scenes

"""
Desk-scale runs: learning and runtime trends, determinism of every file the CLI writes.
Minutes to hours on a laptop CPU, run with `pytest --runslow`.
"""

pytestmark = pytest.mark.slow

AGENTS = (2, 8, 32)
ELEMENTS = (5, 20, 40, 60)


def desk_data(tmp_path_factory, seed: int, train_scenes: int = 512, val_scenes: int = 64) -> RunConfig:
    data = tmp_path_factory.mktemp(f"desk{seed}")
    cfg = RunConfig(seed=seed, train_scenes=train_scenes, val_scenes=val_scenes, data_dir=str(data))
    for split, name in (("train", TRAIN_SPLIT), ("val", VAL_SPLIT)):
        write_dataset(generate_scenes(list(cfg.split_seeds(split)), cfg.scene_config()), data / name)
    cfg.save(data)
    return cfg


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    return {seed: desk_data(tmp_path_factory, seed) for seed in range(3)}


@pytest.fixture(scope="module")
def mapped(desk, tmp_path_factory):
    """desk runs on top of a trained temporal bevformer map model, one per seed"""
    runs = {}
    for seed, cfg in desk.items():
        result = train_map(dataclasses.replace(cfg, epochs=20), tmp_path_factory.mktemp(f"map{seed}"))
        runs[seed] = dataclasses.replace(cfg, map_ckpt=str(result.checkpoint))
    return runs


def test_benchmark_trend():
    rows = run_benchmark_grid(AGENTS, ELEMENTS, runs=31, cfg=RunConfig(seed=0, variant="lss"))
    median = {(r.n_agents, r.n_map_elements, r.pipeline): r.median_ms for r in rows}
    for a in AGENTS:
        for e in ELEMENTS:
            if e >= 20:
                assert median[a, e, "integrated"] < median[a, e, "decoupled"], (a, e)
        speedup = [median[a, e, "decoupled"] / median[a, e, "integrated"] for e in ELEMENTS]
        assert speedup[-1] > speedup[0], a
        integrated = np.array([median[a, e, "integrated"] for e in ELEMENTS])
        assert integrated.std() < 0.1 * integrated.mean(), a


def test_map_decoder_reaches_sub_metre_chamfer(mapped):
    meta, _ = ParamStore.read_manifest(mapped[0].map_ckpt)
    assert meta["chamfer"] < 1.0


def test_predictor_loss_decreases(desk, tmp_path):
    result = train_predictor(dataclasses.replace(desk[0], strategy="s1", epochs=6), tmp_path)
    assert result.log[5].train_loss < result.log[0].train_loss


def test_bev_conditioning_beats_the_baseline(mapped, tmp_path):
    wins = 0
    for seed, cfg in mapped.items():
        run = dataclasses.replace(cfg, epochs=30)
        s1 = train_predictor(dataclasses.replace(run, strategy="s1"), tmp_path / f"s1-{seed}").best
        baseline = train_predictor(dataclasses.replace(run, strategy="baseline"), tmp_path / f"base-{seed}").best
        if seed == 0:
            assert s1 <= baseline * 1.05
        wins += s1 < baseline
    assert wins >= 2


def test_s3_prefers_temporal_bev(mapped, tmp_path):
    wins = 0
    for seed, cfg in mapped.items():
        run = dataclasses.replace(cfg, strategy="s3", epochs=30)
        temporal = train_predictor(run, tmp_path / f"temporal-{seed}").best
        single = train_predictor(dataclasses.replace(run, ablate=True), tmp_path / f"single-{seed}").best
        wins += temporal < single
    assert wins >= 2


def test_cli_outputs_are_bit_identical(tmp_path):
    runner = CliRunner()
    outputs = []
    for run in ("a", "b"):
        root = tmp_path / run
        commands = [
            ["gen", "--seed", "0", "--scenes", "16", "--val-scenes", "4", "--out", root / "data"],
            ["train-pred", "--data", root / "data", "--out", root / "pred", "--strategy", "s2", "--epochs", "2"],
            ["eval", "--ckpt", root / "pred" / "checkpoint", "--out", root / "eval" / "metrics.csv"],
            ["dump-bev", "--data", root / "data", "--out", root / "bev" / "grid.bevt"],
            ["viz-bev", "--in", root / "bev" / "grid.bevt", "--out", root / "bev" / "grid.pgm"],
        ]
        for args in commands:
            result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
            assert result.exit_code == 0, result.output
        outputs.append(
            {
                p.relative_to(root): p.read_bytes()
                for p in sorted(root.rglob("*"))
                if p.is_file() and p.name != "run_config.json"
            }
        )
    assert outputs[0].keys() == outputs[1].keys()
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], name


if __name__ == "__main__":
    pytest.main(["-sv", "--runslow", __file__])
