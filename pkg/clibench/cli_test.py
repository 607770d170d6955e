import json

import pytest
from click.testing import CliRunner

from clibench.cli import IntList, main
from clibench.config import RUN_CONFIG, TRAIN_SPLIT, VAL_SPLIT
from clibench.viz import read_pgm
from synthscene.dataset import read_dataset

GEN = ["gen", "--seed", "1", "--scenes", "2", "--val-scenes", "1", "--agents", "2", "--hz", "2", "--image", "8,12"]
SMALL = ["--bev", "10,5,8", "--patch", "5,5", "--epochs", "1"]


def invoke(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture
def data(tmp_path):
    invoke(*GEN, "--out", tmp_path / "data")
    return tmp_path / "data"


def test_gen_writes_both_splits(data):
    assert len(read_dataset(data / TRAIN_SPLIT)) == 2
    assert len(read_dataset(data / VAL_SPLIT)) == 1
    cfg = json.loads((data / RUN_CONFIG).read_text())
    assert (cfg["seed"], cfg["hz"], cfg["agents"]) == (1, 2, 2)


def test_gen_is_deterministic_across_workers(data, tmp_path):
    invoke(*GEN, "--workers", "2", "--out", tmp_path / "again")
    for name in (TRAIN_SPLIT, VAL_SPLIT):
        assert (data / name).read_bytes() == (tmp_path / "again" / name).read_bytes(), name


def test_train_pred_then_eval(data, tmp_path):
    invoke("train-pred", "--data", data, "--out", tmp_path / "s1", "--strategy", "s1", *SMALL)
    ckpt = tmp_path / "s1" / "checkpoint"
    assert (ckpt / "manifest.txt").exists()
    first = invoke("eval", "--ckpt", ckpt, "--split", "val", "--out", tmp_path / "a" / "metrics.csv")
    invoke("eval", "--ckpt", ckpt, "--split", "val", "--out", tmp_path / "b" / "metrics.csv")
    assert "minFDE" in first.output
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / RUN_CONFIG).exists()


def test_eval_strategy_mismatch_fails(data, tmp_path):
    invoke("train-pred", "--data", data, "--out", tmp_path / "base", "--strategy", "baseline", *SMALL)
    result = CliRunner().invoke(
        main, ["eval", "--ckpt", str(tmp_path / "base" / "checkpoint"), "--strategy", "s2"]
    )
    assert result.exit_code != 0
    assert "ManifestMismatch" in str(result.exception)


def test_train_map_dump_and_viz(data, tmp_path):
    invoke("train-map", "--data", data, "--out", tmp_path / "map", "--variant", "lss", "--single-frame",
           "--bev", "10,5,8", "--epochs", "1")
    ckpt = tmp_path / "map" / "checkpoint"
    invoke("dump-bev", "--data", data, "--map-ckpt", ckpt, "--out", tmp_path / "bev" / "grid.bevt")
    invoke("viz-bev", "--in", tmp_path / "bev" / "grid.bevt", "--out", tmp_path / "bev" / "a.pgm")
    invoke("viz-bev", "--in", tmp_path / "bev" / "grid.bevt", "--out", tmp_path / "bev" / "b.pgm")
    assert read_pgm(tmp_path / "bev" / "a.pgm").shape == (10, 5)
    assert (tmp_path / "bev" / "a.pgm").read_bytes() == (tmp_path / "bev" / "b.pgm").read_bytes()


def test_map_and_lane_source_flags_are_recorded(data, tmp_path):
    invoke("train-map", "--data", data, "--out", tmp_path / "map", "--variant", "lss", "--single-frame",
           "--no-centerlines", "--bev", "10,5,8", "--epochs", "1")
    assert json.loads((tmp_path / "map" / "checkpoint" / RUN_CONFIG).read_text())["centerlines"] is False
    invoke("train-pred", "--data", data, "--out", tmp_path / "base", "--strategy", "baseline", "--oracle-lanes",
           *SMALL)
    cfg = json.loads((tmp_path / "base" / "checkpoint" / RUN_CONFIG).read_text())
    assert cfg["oracle_lanes"] is True
    result = CliRunner().invoke(
        main, ["train-pred", "--data", str(data), "--out", str(tmp_path / "s1"), "--strategy", "s1", "--oracle-lanes"]
    )
    assert "oracle_lanes" in str(result.exception)


def test_bench_command(tmp_path):
    out = tmp_path / "bench.csv"
    invoke("bench", "--agents", "1", "--elements", "3,4", "--bev", "10,5,8", "--patch", "5,5", "--out", out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 2 + 1 * 2 * 2
    assert (tmp_path / RUN_CONFIG).exists()


@pytest.mark.parametrize(
    "args",
    [
        ["bench", "--agents", "2,x", "--out", "b.csv"],
        ["bench", "--runs", "31", "--patch", "5", "--out", "b.csv"],
        ["train-pred", "--data", ".", "--out", "o", "--strategy", "s9"],
    ],
)
def test_bad_arguments_are_usage_errors(args, tmp_path):
    with CliRunner().isolated_filesystem(temp_dir=tmp_path):
        result = CliRunner().invoke(main, args)
    assert result.exit_code == 2


def test_int_list():
    assert IntList().convert("2,8,32", None, None) == (2, 8, 32)
    assert IntList(2).convert((5, 5), None, None) == (5, 5)


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
