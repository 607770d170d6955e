import dataclasses

import numpy as np
import pytest

from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, precision
from pv2bev.grid import BEVGridMeta
from pv2bev.lss import DepthConfig, lift, lss_encode, splat
from pv2bev.stem import ViewFeatures
from synthscene.camera import default_rig

META = BEVGridMeta(H=20, W=10, D=3)


def features(seed: int, cameras: int = 6, D: int = 3) -> ViewFeatures:
    return ViewFeatures(Tensor(np.random.default_rng(seed).normal(size=(cameras, 4, 6, D))))


def test_depth_config_validation():
    with pytest.raises(ConfigError):
        DepthConfig(bins=1)
    with pytest.raises(ConfigError):
        DepthConfig(d_min=5.0, d_max=5.0)
    assert DepthConfig().depths()[[0, -1]].tolist() == [1.0, 35.0]


def test_equal_depth_logits_spread_uniformly():
    depth = DepthConfig()
    params = ParamStore(seed=0)
    params.set("depth.w", np.zeros((3, depth.bins)))
    params.set("depth.b", np.zeros(depth.bins))
    cloud = lift(features(0), default_rig(6, 16, 24), depth, params)
    np.testing.assert_allclose(cloud.depth_weights.data, 1.0 / depth.bins, atol=1e-7)


def test_point_count_and_weight_normalisation():
    depth = DepthConfig(bins=8)
    cloud = lift(features(1), default_rig(6, 16, 24), depth, ParamStore(seed=1))
    assert cloud.points.shape == (6 * 4 * 6 * 8, 3)
    assert cloud.features.shape == (6 * 4 * 6 * 8, 3)
    np.testing.assert_allclose(cloud.depth_weights.data.sum(axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_splat_conserves_mass(seed):
    with precision(np.float64):
        cloud = lift(features(seed), default_rig(6, 16, 24), DepthConfig(), ParamStore(seed=seed))
        pooled = splat(cloud, META)
    row, col = META.cell_index(cloud.points[:, :2])
    inside = (row >= 0) & (row < META.H) & (col >= 0) & (col < META.W)
    assert pooled.dropped == int((~inside).sum())
    expected = cloud.features.data[inside].sum()
    np.testing.assert_allclose(pooled.grid.data.sum(), expected, rtol=1e-6)


def test_out_of_range_rays_contribute_nothing():
    cam = dataclasses.replace(default_rig(1, 16, 24)[0], translation=np.array([60.0, 0.0, 1.6]))
    grid = lss_encode(features(2, cameras=1), [cam], META, DepthConfig(), ParamStore(seed=2))
    np.testing.assert_array_equal(grid.features.data, np.zeros(META.shape))
    assert not grid.temporal


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
