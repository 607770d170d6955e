import pytest

from clibench.config import TRAIN_SPLIT, VAL_SPLIT, RunConfig
from synthscene.dataset import write_dataset
from synthscene.scene import generate_scenes


def tiny_config(data_dir, **overrides) -> RunConfig:
    """2 Hz scenes on a 10 x 5 x 8 grid, small enough to train in seconds"""
    base = dict(
        seed=3,
        train_scenes=2,
        val_scenes=2,
        hz=2,
        agents=3,
        image_rows=8,
        image_cols=12,
        bev=(10, 5, 8),
        map_instances=3,
        patch=(5, 5),
        epochs=2,
        data_dir=str(data_dir),
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def tiny(tmp_path_factory) -> RunConfig:
    data = tmp_path_factory.mktemp("data")
    cfg = tiny_config(data)
    for split, name in (("train", TRAIN_SPLIT), ("val", VAL_SPLIT)):
        write_dataset(generate_scenes(list(cfg.split_seeds(split)), cfg.scene_config()), data / name)
    cfg.save(data)
    return cfg
