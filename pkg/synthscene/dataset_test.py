import numpy as np
import pytest

from synthscene.dataset import (
    HEADER,
    DatasetParseError,
    encode_scene,
    parse_dataset,
    read_dataset,
    scene_digest,
    write_dataset,
)
from synthscene.scene import SceneConfig, generate_scene


@pytest.fixture(scope="module")
def scenes():
    return [generate_scene(seed, SceneConfig(agents=3)) for seed in range(10)]


def assert_same_scene(a, b):
    assert a.seed == b.seed
    assert a.config == b.config
    assert a.road == b.road
    np.testing.assert_array_equal(a.ego_poses, b.ego_poses)
    assert len(a.agents) == len(b.agents)
    for x, y in zip(a.agents, b.agents):
        assert x.agent_id == y.agent_id
        np.testing.assert_array_equal(x.history, y.history)
        np.testing.assert_array_equal(x.future, y.future)
        np.testing.assert_array_equal(x.half_extent, y.half_extent)
    assert [e.cls for e in a.gt_map] == [e.cls for e in b.gt_map]
    for e, f in zip(a.gt_map, b.gt_map):
        np.testing.assert_array_equal(e.polyline, f.polyline)
    assert sorted(a.views) == sorted(b.views)
    for frame in a.views:
        np.testing.assert_array_equal(a.views[frame], b.views[frame])


def test_roundtrip(tmp_path, scenes):
    path = tmp_path / "train.scenes"
    write_dataset(scenes, path)
    back = read_dataset(path)
    assert len(back) == len(scenes)
    for a, b in zip(scenes, back):
        assert_same_scene(a, b)
        assert scene_digest(a) == scene_digest(b)


def test_file_starts_with_header(tmp_path, scenes):
    write_dataset(scenes[:1], tmp_path / "one.scenes")
    assert (tmp_path / "one.scenes").read_bytes().startswith(HEADER)


def test_digest_depends_on_seed(scenes):
    assert len({scene_digest(s) for s in scenes}) == len(scenes)


@pytest.mark.parametrize("cut", [0.2, 0.5, 0.9, 0.999])
def test_truncated_file_fails_without_partial_result(scenes, cut):
    buf = HEADER + b"scenes 2\n" + encode_scene(scenes[0]) + encode_scene(scenes[1])
    with pytest.raises(DatasetParseError) as raised:
        parse_dataset(buf[: int(len(buf) * cut)])
    assert 0 <= raised.value.offset <= len(buf)


def test_bad_magic(scenes):
    with pytest.raises(DatasetParseError) as raised:
        parse_dataset(b"BEVFLOW-SCENE v2\nscenes 0\n")
    assert raised.value.offset == 0


def test_corrupt_blob_reports_its_offset(scenes):
    body = encode_scene(scenes[0])
    at = body.index(b"BEVT")
    corrupt = HEADER + b"scenes 1\n" + body[:at] + b"XXXX" + body[at + 4:]
    with pytest.raises(DatasetParseError) as raised:
        parse_dataset(corrupt)
    assert raised.value.offset == len(HEADER) + len(b"scenes 1\n") + at


@pytest.mark.parametrize("keyword", [b"poses", b"history", b"map"])
@pytest.mark.parametrize("count", [b"-1", b"99999999999"])
def test_count_out_of_range_reports_its_line(scenes, keyword, count):
    body = encode_scene(scenes[0])
    at = body.index(b"\n" + keyword + b" ") + 1
    end = body.index(b"\n", at)
    bad = HEADER + b"scenes 1\n" + body[:at] + keyword + b" " + count + body[end:]
    with pytest.raises(DatasetParseError, match="out of range") as raised:
        parse_dataset(bad)
    assert raised.value.offset == len(HEADER) + len(b"scenes 1\n") + at


def test_trailing_garbage(scenes):
    with pytest.raises(DatasetParseError):
        parse_dataset(HEADER + b"scenes 1\n" + encode_scene(scenes[0]) + b"junk")


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
