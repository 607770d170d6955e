import functools

import numpy as np
import pytest

from numgrad.gradcheck import grad_check
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, precision
from pv2bev.bevformer import EncoderContractError
from pv2bev.encoder import EncoderConfig, encode_bev, encode_scene
from pv2bev.grid import BEVGrid, BEVGridMeta, load_bev, save_bev
from synthscene.scene import SceneConfig, generate_scene

CFG = EncoderConfig.mini(D=8)


@functools.lru_cache(maxsize=None)
def small_scene(seed: int = 0):
    return generate_scene(seed, SceneConfig(agents=2, image_rows=16, image_cols=24))


def frames(scene):
    return sorted(scene.views)


def test_grid_meta_defaults():
    meta = BEVGridMeta()
    assert meta.shape == (100, 50, 32)
    assert meta.cell == pytest.approx(0.6)
    assert meta.center_index == (49.5, 24.5)
    assert BEVGridMeta.full_scale().shape == (200, 100, 256)
    with pytest.raises(ConfigError):
        BEVGridMeta(H=100, W=40)


def test_grid_coords_of_cell_centres_are_integers():
    meta = BEVGridMeta(H=10, W=5, D=1)
    np.testing.assert_allclose(meta.grid_coords(meta.cell_centers()), meta.cell_grid(), atol=1e-9)


def test_encoder_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(blocks=0)
    with pytest.raises(ConfigError):
        EncoderConfig(meta=BEVGridMeta(D=30))


@pytest.mark.parametrize("variant", ["bevformer", "lss"])
def test_output_shape(variant):
    scene = small_scene()
    grid = encode_bev(variant, scene, frames(scene)[-1], None, CFG, ParamStore(seed=0))
    assert grid.features.shape == CFG.meta.shape
    assert grid.frame == frames(scene)[-1]
    assert not grid.temporal


def test_lss_ignores_prev():
    scene = small_scene()
    first, second = frames(scene)
    params = ParamStore(seed=1)
    prev = encode_bev("lss", scene, first, None, CFG, params)
    with_prev = encode_bev("lss", scene, second, prev, CFG, params)
    without = encode_bev("lss", scene, second, None, CFG, params)
    np.testing.assert_array_equal(with_prev.features.data, without.features.data)
    assert not with_prev.temporal


def test_bevformer_uses_prev():
    scene = small_scene()
    first, second = frames(scene)
    params = ParamStore(seed=2)
    prev = encode_bev("bevformer", scene, first, None, CFG, params).detach()
    fused = encode_bev("bevformer", scene, second, prev, CFG, params)
    static = encode_bev("bevformer", scene, second, None, CFG, params)
    assert fused.temporal and not static.temporal
    assert np.linalg.norm(fused.features.data - static.features.data) > 0


def test_encode_is_deterministic():
    scene = small_scene()
    a = encode_bev("bevformer", scene, frames(scene)[0], None, CFG, ParamStore(seed=3))
    b = encode_bev("bevformer", scene, frames(scene)[0], None, CFG, ParamStore(seed=3))
    np.testing.assert_array_equal(a.features.data, b.features.data)


def test_encode_scene_streams_frames():
    scene = small_scene()
    grids = encode_scene("bevformer", scene, CFG, ParamStore(seed=4))
    assert [g.frame for g in grids] == frames(scene)
    assert [g.temporal for g in grids] == [False, True]
    static = encode_scene("bevformer", scene, CFG, ParamStore(seed=4), temporal=False)
    assert not any(g.temporal for g in static)


def test_contract_violations():
    scene = small_scene()
    first, second = frames(scene)
    params = ParamStore(seed=5)
    with pytest.raises(EncoderContractError):
        encode_bev("maptr", scene, second, None, CFG, params)
    with pytest.raises(EncoderContractError):
        encode_bev("lss", scene, 0, None, CFG, params)
    later = encode_bev("bevformer", scene, second, None, CFG, params)
    with pytest.raises(EncoderContractError):
        encode_bev("bevformer", scene, first, later, CFG, params)
    other = BEVGridMeta(H=20, W=10, D=8)
    with pytest.raises(EncoderContractError):
        encode_bev("bevformer", scene, second, BEVGrid(other, Tensor(np.zeros(other.shape)), first), CFG, params)


def test_save_load_roundtrip(tmp_path):
    grid = encode_bev("lss", small_scene(), frames(small_scene())[0], None, CFG, ParamStore(seed=6))
    path = save_bev(grid, tmp_path / "bev.bevt")
    loaded = load_bev(path)
    assert loaded.meta == grid.meta
    assert (loaded.frame, loaded.temporal) == (grid.frame, grid.temporal)
    np.testing.assert_array_equal(loaded.features.data, grid.features.data.astype(np.float32))
    H, W, D, cell, frame, temporal = (tmp_path / "bev.bevt.meta").read_text().split()
    assert (int(H), int(W), int(D), int(temporal)) == (10, 5, 8, 0)
    assert float(cell) == pytest.approx(6.0)


def param_check(variant: str, name: str, seed: int, with_prev: bool = False):
    """grad_check of a weighted sum of the encoder output with respect to one named parameter"""
    scene = small_scene()
    first, second = frames(scene)
    rng = np.random.default_rng(seed)
    # plain sums vanish through the final layer norm
    weights = rng.normal(size=CFG.meta.shape)
    with precision(np.float64):
        params = ParamStore(seed=seed, dtype=np.float64)
        prev = encode_bev(variant, scene, first, None, CFG, params).detach() if with_prev else None
        encode_bev(variant, scene, second, prev, CFG, params)
        x0 = params.snapshot()[name]

        def f(x: Tensor) -> Tensor:
            params.set(name, x)
            return (encode_bev(variant, scene, second, prev, CFG, params).features * weights).sum()

        return grad_check(f, Tensor(x0 + rng.normal(scale=0.1, size=x0.shape)), tol=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_bevformer_grad_through_temporal_offsets(seed):
    assert param_check("bevformer", "bevformer.block0.tsa.prev.offset.b", seed, with_prev=True).passed


@pytest.mark.parametrize("seed", range(5))
def test_bevformer_grad_through_camera_offsets(seed):
    assert param_check("bevformer", "bevformer.block0.sca.offset.b", seed).passed


@pytest.mark.parametrize("seed", range(5))
def test_lss_grad_through_depth(seed):
    assert param_check("lss", "lss.depth.b", seed).passed


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
