import dataclasses

import numpy as np
import pytest

from mapdec.decoder import DecodedMap
from numgrad.attention import AttentionConfig
from numgrad.gradcheck import grad_check
from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, Tensor, precision
from predict.model import STRATEGIES, AgentContext, PredictorConfig, StrategyInputError, forward_predict
from pv2bev.grid import BEVGrid, BEVGridMeta
from synthscene.scene import MapElement, VectorMap

META = BEVGridMeta(H=10, W=5, D=4)
CFG = PredictorConfig(
    d_model=8,
    heads=2,
    t_h=5,
    t_f=4,
    lane_pts=4,
    mlp_dim=8,
    bev_attention=AttentionConfig(heads=2, head_dim=4, mlp_dim=8, depth=1),
    patch=(5, 5),
)


def lanes(shift: float = 0.0) -> VectorMap:
    return VectorMap(
        (
            MapElement("divider", np.array([[shift, -20.0], [shift, 20.0]])),
            MapElement("centerline", np.array([[2.0 + shift, -25.0], [1.0, 0.0], [2.0, 25.0]])),
        )
    )


def bev(seed: int, temporal: bool = True) -> BEVGrid:
    return BEVGrid(META, Tensor(np.random.default_rng(seed).normal(size=META.shape)), frame=1, temporal=temporal)


def context(seed: int, M: int = 3, histories: bool = True) -> AgentContext:
    rng = np.random.default_rng(seed)
    positions = rng.uniform([-14.0, -29.0], [14.0, 29.0], size=(M, 2))
    hist = positions[:, None, :] + np.cumsum(rng.normal(size=(M, CFG.t_h, 2)), axis=1) if histories else None
    return AgentContext(tuple(range(10, 10 + M)), positions, hist)


def inputs(strategy: str, seed: int = 0) -> dict:
    kw = {}
    if strategy != "s1":
        kw["lanes"] = lanes()
    if strategy != "baseline":
        kw["bev"] = bev(seed)
    return kw


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_output_shape_and_scores(strategy):
    pred = forward_predict(strategy, context(0), ParamStore(seed=0), CFG, **inputs(strategy))
    assert pred.trajectories.shape == (3, 6, CFG.t_f, 2)
    assert pred.logits.shape == (3, 6)
    assert pred.agent_ids == (10, 11, 12)
    np.testing.assert_allclose(pred.scores.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_s1_ignores_the_map(seed):
    params = ParamStore(seed=seed)
    ctx, grid = context(seed), bev(seed)
    reference = forward_predict("s1", ctx, params, CFG, bev=grid)
    for other in (lanes(), lanes(3.0)):
        out = forward_predict("s1", ctx, params, CFG, lanes=other, bev=grid)
        np.testing.assert_array_equal(out.trajectories.data, reference.trajectories.data)
        np.testing.assert_array_equal(out.logits.data, reference.logits.data)


@pytest.mark.parametrize("seed", range(3))
def test_s3_ignores_histories(seed):
    params = ParamStore(seed=seed)
    grid = bev(seed)
    reference = forward_predict("s3", context(seed, histories=False), params, CFG, lanes=lanes(), bev=grid)
    for other_seed in (seed + 10, seed + 20):
        ctx = context(seed)
        shuffled = dataclasses.replace(ctx, histories=context(other_seed).histories)
        out = forward_predict("s3", shuffled, params, CFG, lanes=lanes(), bev=grid)
        np.testing.assert_array_equal(out.trajectories.data, reference.trajectories.data)


def test_s3_requires_temporal_grid_unless_ablated():
    ctx = context(1, histories=False)
    with pytest.raises(StrategyInputError) as e:
        forward_predict("s3", ctx, ParamStore(seed=0), CFG, lanes=lanes(), bev=bev(1, temporal=False))
    assert "temporal" in str(e.value)
    pred = forward_predict("s3", ctx, ParamStore(seed=0), CFG, lanes=lanes(), bev=bev(1, temporal=False), ablate=True)
    assert pred.trajectories.shape == (3, 6, CFG.t_f, 2)


@pytest.mark.parametrize(
    "strategy, kw",
    [
        ("baseline", {}),
        ("s1", {}),
        ("s2", {"lanes": lanes()}),
    ],
)
def test_missing_inputs(strategy, kw):
    with pytest.raises(StrategyInputError):
        forward_predict(strategy, context(0), ParamStore(seed=0), CFG, **kw)


def test_history_strategies_need_histories():
    with pytest.raises(StrategyInputError):
        forward_predict("baseline", context(0, histories=False), ParamStore(seed=0), CFG, lanes=lanes())


def test_rejects_unknown_strategy_and_bad_history():
    with pytest.raises(ConfigError):
        forward_predict("s4", context(0), ParamStore(seed=0), CFG, lanes=lanes())
    ctx = context(0)
    with pytest.raises(ConfigError):
        forward_predict("baseline", dataclasses.replace(ctx, histories=ctx.histories[:, :3]), ParamStore(seed=0), CFG, lanes=lanes())


def test_baseline_accepts_decoded_map_and_empty_map():
    logits = np.array([[0.0, 9.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 9.0]])
    vertices = np.array([[[0.0, -10.0], [0.0, 0.0], [0.0, 10.0]], [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]])
    decoded = DecodedMap(Tensor(logits), Tensor(vertices))
    params = ParamStore(seed=0)
    from_decoded = forward_predict("baseline", context(0), params, CFG, lanes=decoded)
    from_vector = forward_predict("baseline", context(0), params, CFG, lanes=decoded.to_vector_map(CFG.map_threshold)[0])
    np.testing.assert_array_equal(from_decoded.trajectories.data, from_vector.trajectories.data)
    empty = forward_predict("baseline", context(0), params, CFG, lanes=VectorMap())
    assert np.isfinite(empty.trajectories.data).all()


def test_dropout_only_with_rng():
    params = ParamStore(seed=0)
    a = forward_predict("baseline", context(0), params, CFG, lanes=lanes())
    b = forward_predict("baseline", context(0), params, CFG, lanes=lanes())
    np.testing.assert_array_equal(a.trajectories.data, b.trajectories.data)
    c = forward_predict("baseline", context(0), params, CFG, lanes=lanes(), rng=np.random.default_rng(0))
    assert not np.array_equal(a.trajectories.data, c.trajectories.data)


def test_presets():
    cl = PredictorConfig.preset("maptrv2-cl")
    assert cl.patch == (20, 20) and cl.lr == 3.5e-4
    assert cl.bev_attention == AttentionConfig(heads=12, head_dim=32, mlp_dim=64, depth=4)
    s2 = PredictorConfig.preset("maptr", "s2")
    assert (s2.lr, s2.weight_decay, s2.dropout) == (1.5e-4, 0.05, 0.2)
    assert PredictorConfig.preset("maptr", "s3").patch == (10, 5)
    with pytest.raises(ConfigError):
        PredictorConfig.preset("hdmapnet")
    with pytest.raises(ConfigError):
        PredictorConfig(d_model=10, heads=4)


@pytest.mark.parametrize("seed", range(5))
def test_s1_grad_wrt_bev(seed):
    rng = np.random.default_rng(seed)
    ctx = context(seed, M=2)
    w_t, w_l = rng.normal(size=(2, 6, CFG.t_f, 2)), rng.normal(size=(2, 6))
    with precision(np.float64):
        params = ParamStore(seed=seed, dtype=np.float64)

        def f(x: Tensor) -> Tensor:
            pred = forward_predict("s1", ctx, params, CFG, bev=BEVGrid(META, x, frame=1))
            return (pred.trajectories * w_t).sum() + (pred.logits * w_l).sum()

        assert grad_check(f, Tensor(rng.normal(size=META.shape)), tol=1e-3).passed


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
