from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import pathlib
from typing import Iterable

import numpy as np

from numgrad.blob import BlobError, decode_blob, encode_blob
from synthscene.scene import Agent, MapElement, RoadGeometry, Scene, SceneConfig, VectorMap

"""
Scene dataset container.

    BEVFLOW-SCENE v1
    scenes <n>
    scene <seed>
    config <json>
    road <curvature> <lanes> <ego_lane> <lane_width> <crosswalk s0 s1 | none>
    poses <frames>          then one "x y yaw" line per frame
    agents <m>              then per agent "agent <id> <half_length> <half_width>",
                            "history <T_h>" + rows, "future <T_f>" + rows
    map <e>                 then per element "<class> <V>" + V "x y" rows
    views <f>               then per frame "frame <t>" followed by one BEVT blob and a newline
    end

Floats are written with repr so they read back bit-exact.
"""

logger = logging.getLogger(__name__)

HEADER = b"BEVFLOW-SCENE v1\n"


class DatasetParseError(ValueError):
    """Malformed scene dataset"""

    def __init__(self, offset: int, reason: str) -> None:
        self.offset = offset
        self.reason = reason
        super().__init__(offset, reason)

    def __str__(self) -> str:
        return f"DatasetParseError at byte {self.offset}: {self.reason}"


def _row(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def _rows(arr: np.ndarray) -> list[str]:
    return [_row(r) for r in np.asarray(arr, dtype=np.float64)]


def format_map(vmap: VectorMap, scores: Iterable[float] | None = None) -> list[str]:
    """Map section lines. With scores, each element header carries a trailing score."""
    lines = [f"map {len(vmap)}"]
    score_list = list(scores) if scores is not None else [None] * len(vmap)
    for element, score in zip(vmap.elements, score_list):
        head = f"{element.cls} {len(element.polyline)}"
        lines.append(head if score is None else f"{head} {float(score)!r}")
        lines += _rows(element.polyline)
    return lines


def encode_scene(scene: Scene) -> bytes:
    road = scene.road
    cw = "none" if road.crosswalk is None else _row(road.crosswalk)
    lines = [
        f"scene {scene.seed}",
        f"config {json.dumps(dataclasses.asdict(scene.config), sort_keys=True)}",
        f"road {road.curvature!r} {road.lanes} {road.ego_lane} {road.lane_width!r} {cw}",
        f"poses {len(scene.ego_poses)}",
        *_rows(scene.ego_poses),
        f"agents {len(scene.agents)}",
    ]
    for a in scene.agents:
        lines.append(f"agent {a.agent_id} {_row(a.half_extent)}")
        lines += [f"history {len(a.history)}", *_rows(a.history)]
        lines += [f"future {len(a.future)}", *_rows(a.future)]
    lines += format_map(scene.gt_map)
    lines.append(f"views {len(scene.views)}")
    out = bytearray("\n".join(lines).encode() + b"\n")
    for frame in sorted(scene.views):
        out += f"frame {frame}\n".encode()
        out += encode_blob(scene.views[frame]) + b"\n"
    out += b"end\n"
    return bytes(out)


def scene_digest(scene: Scene) -> str:
    """sha256 over the serialized scene"""
    return hashlib.sha256(encode_scene(scene)).hexdigest()


class _Cursor:
    """Line and blob reader over a byte buffer, raising with the offending offset"""

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def fail(self, reason: str, at: int | None = None) -> DatasetParseError:
        return DatasetParseError(self.pos if at is None else at, reason)

    def line(self) -> str:
        end = self.buf.find(b"\n", self.pos)
        if end < 0:
            raise self.fail("unexpected end of file")
        raw = self.buf[self.pos:end]
        try:
            text = raw.decode("ascii")
        except UnicodeDecodeError as exc:
            raise self.fail("non-ascii text line") from exc
        self.pos = end + 1
        return text

    def fields(self, keyword: str, count: int) -> list[str]:
        start = self.pos
        parts = self.line().split()
        if not parts or parts[0] != keyword or len(parts) - 1 != count:
            raise self.fail(f"expected '{keyword}' with {count} fields, got {' '.join(parts)[:40]!r}", at=start)
        return parts[1:]

    def number(self, text: str, kind=float):
        try:
            return kind(text)
        except ValueError as exc:
            raise self.fail(f"bad number {text!r}") from exc

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        out = np.empty((rows, cols))
        for i in range(rows):
            start = self.pos
            parts = self.line().split()
            if len(parts) != cols:
                raise self.fail(f"expected {cols} values, got {len(parts)}", at=start)
            out[i] = [self.number(p) for p in parts]
        return out

    def count(self, text: str, at: int) -> int:
        """a repeat count; every repeated item takes at least one byte of what is left"""
        n = self.number(text, int)
        if not 0 <= n <= len(self.buf) - self.pos:
            raise self.fail(f"count {n} out of range", at=at)
        return n

    def sized(self, keyword: str) -> int:
        start = self.pos
        return self.count(self.fields(keyword, 1)[0], start)

    def blob(self) -> np.ndarray:
        try:
            arr, self.pos = decode_blob(self.buf, self.pos)
        except BlobError as exc:
            raise self.fail(exc.reason, at=exc.offset) from exc
        if self.buf[self.pos:self.pos + 1] != b"\n":
            raise self.fail("missing newline after image blob")
        self.pos += 1
        return arr


def _read_map(cur: _Cursor, with_scores: bool = False) -> tuple[VectorMap, list[float]]:
    n = cur.sized("map")
    elements, scores = [], []
    for _ in range(n):
        start = cur.pos
        parts = cur.line().split()
        if len(parts) != (3 if with_scores else 2):
            raise cur.fail("bad map element header", at=start)
        size = cur.count(parts[1], start)
        if with_scores:
            scores.append(cur.number(parts[2]))
        try:
            elements.append(MapElement(parts[0], cur.matrix(size, 2)))
        except ValueError as exc:
            if isinstance(exc, DatasetParseError):
                raise
            raise cur.fail(str(exc), at=start) from exc
    return VectorMap(tuple(elements)), scores


def _read_scene(cur: _Cursor) -> Scene:
    seed = cur.number(cur.fields("scene", 1)[0], int)
    start = cur.pos
    text = cur.line()
    if not text.startswith("config "):
        raise cur.fail("expected config", at=start)
    try:
        raw = json.loads(text[len("config "):])
        raw["curvature"] = tuple(raw["curvature"])
        config = SceneConfig(**raw)
    except (ValueError, TypeError, KeyError) as exc:
        raise cur.fail(f"bad config: {exc}", at=start) from exc

    start = cur.pos
    r = cur.line().split()
    if r[:1] != ["road"] or len(r) not in (6, 7) or (len(r) == 6) != (r[-1] == "none"):
        raise cur.fail("bad road line", at=start)
    r = r[1:]
    crosswalk = None if r[4] == "none" else (cur.number(r[4]), cur.number(r[5]))
    road = RoadGeometry(cur.number(r[0]), cur.number(r[1], int), cur.number(r[2], int), cur.number(r[3]), crosswalk)

    poses = cur.matrix(cur.sized("poses"), 3)
    agents = []
    for _ in range(cur.sized("agents")):
        a = cur.fields("agent", 3)
        half = np.array([cur.number(a[1]), cur.number(a[2])])
        history = cur.matrix(cur.sized("history"), 2)
        future = cur.matrix(cur.sized("future"), 2)
        agents.append(Agent(cur.number(a[0], int), half, history, future))
    gt_map, _ = _read_map(cur)
    views = {}
    for _ in range(cur.sized("views")):
        frame = cur.sized("frame")
        views[frame] = cur.blob()
    cur.fields("end", 0)
    return Scene(seed, config, road, poses, tuple(agents), gt_map, views)


def write_dataset(scenes: Iterable[Scene], path: str | pathlib.Path) -> int:
    scenes = list(scenes)
    body = HEADER + f"scenes {len(scenes)}\n".encode() + b"".join(encode_scene(s) for s in scenes)
    pathlib.Path(path).write_bytes(body)
    logger.info("wrote %d scenes to %s (%d bytes)", len(scenes), path, len(body))
    return len(body)


def read_dataset(path: str | pathlib.Path) -> list[Scene]:
    """Parse a whole dataset file. Any defect raises DatasetParseError; nothing is returned partially."""
    buf = pathlib.Path(path).read_bytes()
    return parse_dataset(buf)


def parse_dataset(buf: bytes) -> list[Scene]:
    if not buf.startswith(HEADER):
        raise DatasetParseError(0, "missing 'BEVFLOW-SCENE v1' header")
    cur = _Cursor(buf)
    cur.pos = len(HEADER)
    count = cur.sized("scenes")
    scenes = [_read_scene(cur) for _ in range(count)]
    if cur.pos != len(buf):
        raise cur.fail(f"{len(buf) - cur.pos} trailing bytes")
    return scenes
