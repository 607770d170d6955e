import numpy as np
import pytest

from mapdec.decoder import DECODER_CLASSES, DecodedMap, DecoderConfig, MapQuerySet, decode_bev, format_decoded
from numgrad.attention import DeformableConfig
from numgrad.gradcheck import grad_check
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, precision
from pv2bev.grid import BEVGrid, BEVGridMeta
from synthscene.geometry import PERCEPTION_RANGE

META = BEVGridMeta(H=10, W=5, D=4)
CFG = DecoderConfig(n_inst=3, n_pts=4, depth=2, heads=2, deform=DeformableConfig(heads=2, n_points=2), mlp_dim=8)


def bev(seed: int, scale: float = 1.0) -> BEVGrid:
    return BEVGrid(META, Tensor(np.random.default_rng(seed).normal(size=META.shape) * scale), frame=0)


def test_config_validation():
    with pytest.raises(ConfigError):
        DecoderConfig(n_inst=0)
    with pytest.raises(ConfigError):
        DecoderConfig(n_pts=1)
    with pytest.raises(ConfigError):
        DecoderConfig(score_threshold=1.5)
    assert "centerline" not in DecoderConfig(with_centerlines=False).classes


def test_query_set_is_additive():
    params = ParamStore(seed=0)
    queries = MapQuerySet.from_params(params, CFG, 4)
    q = queries.queries().data.reshape(3, 4, 4)
    np.testing.assert_allclose(q[1, 2], queries.instance.data[1] + queries.point.data[2], rtol=1e-6)


def test_zero_weights_decode_to_range_centre():
    params = ParamStore(seed=1)
    decode_bev(bev(1), CFG, params)
    for name, t in list(params.items()):
        params.set(name, np.zeros(t.shape))
    decoded = decode_bev(BEVGrid(META, Tensor(np.zeros(META.shape)), frame=0), CFG, params)
    np.testing.assert_array_equal(decoded.vertices.data, np.zeros((3, 4, 2)))
    np.testing.assert_array_equal(decoded.logits.data, np.zeros((3, len(DECODER_CLASSES))))


@pytest.mark.parametrize("seed", range(3))
def test_vertex_count_and_range(seed):
    decoded = decode_bev(bev(seed, scale=50.0), CFG, ParamStore(seed=seed))
    assert decoded.vertices.shape == (CFG.n_inst, CFG.n_pts, 2)
    assert decoded.logits.shape == (CFG.n_inst, len(DECODER_CLASSES))
    assert PERCEPTION_RANGE.contains(decoded.vertices.data.reshape(-1, 2)).all()
    np.testing.assert_allclose(decoded.probabilities().sum(axis=1), 1.0, atol=1e-6)


def test_export_thresholds_and_closes_crosswalks():
    logits = np.array(
        [
            [0.0, 0.0, 9.0, 0.0, 0.0],  # crosswalk
            [9.0, 0.0, 0.0, 0.0, 0.0],  # boundary
            [0.0, 0.0, 0.0, 0.0, 9.0],  # none
        ]
    )
    vertices = np.array(
        [
            [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]],
            [[-7.0, -9.0], [-7.0, -9.0], [-7.0, 0.0], [-7.0, 9.0]],
            [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]],
        ]
    )
    decoded = DecodedMap(Tensor(logits), Tensor(vertices))
    vmap, scores = decoded.to_vector_map(0.4)
    assert [e.cls for e in vmap] == ["crosswalk", "boundary"]
    assert vmap.elements[0].closed and len(vmap.elements[0].polyline) == 5
    assert len(vmap.elements[1].polyline) == 3
    assert all(s > 0.99 for s in scores)
    lines = format_decoded(decoded, 0.4, classes=("boundary",))
    assert lines[0] == "map 1"
    assert lines[1].startswith("boundary 3 0.99")


@pytest.mark.parametrize("seed", range(5))
def test_decode_grad_wrt_bev(seed):
    """single block: references come from the BEV-independent initial estimate"""
    cfg = DecoderConfig(n_inst=2, n_pts=3, depth=1, heads=2, deform=DeformableConfig(heads=2, n_points=2), mlp_dim=8)
    rng = np.random.default_rng(seed)
    w_v, w_l = rng.normal(size=(2, 3, 2)), rng.normal(size=(2, len(DECODER_CLASSES)))
    with precision(np.float64):
        params = ParamStore(seed=seed, dtype=np.float64)

        def f(x: Tensor) -> Tensor:
            decoded = decode_bev(BEVGrid(META, x, frame=0), cfg, params)
            return (decoded.vertices * w_v).sum() + (decoded.logits * w_l).sum()

        assert grad_check(f, Tensor(rng.normal(size=META.shape)), tol=1e-3).passed


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
