from __future__ import annotations

import dataclasses
import logging
from typing import Sequence

import numpy as np

from synthscene.camera import Camera, default_rig
from synthscene.geometry import PERCEPTION_RANGE, PerceptionRange, split_runs

"""
Seeded procedural driving scenes.

The road is a constant-curvature arc (or a straight line) through the ego
position, described in Frenet coordinates (s along the ego lane centre,
d to the right of it). The world frame is the ego frame at the prediction
time, i.e. the last history frame.
"""

logger = logging.getLogger(__name__)

MAP_CLASSES = ("boundary", "divider", "crosswalk", "centerline")

# sampling step of ground-truth polylines, metres
MAP_STEP = 2.0
MAX_SPEED = 20.0
LATERAL_NOISE = 0.5


class SceneConfigError(ValueError):
    """Scene settings that cannot produce a valid scene"""


@dataclasses.dataclass(frozen=True)
class MapElement:
    cls: str
    polyline: np.ndarray  # V x 2

    def __post_init__(self) -> None:
        if self.cls not in MAP_CLASSES:
            raise ValueError(f"unknown map class {self.cls!r}")
        if len(self.polyline) < 2:
            raise ValueError(f"{self.cls} polyline needs at least 2 vertices")

    @property
    def closed(self) -> bool:
        return bool(np.array_equal(self.polyline[0], self.polyline[-1]))


@dataclasses.dataclass(frozen=True)
class VectorMap:
    elements: tuple[MapElement, ...] = ()

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def of_class(self, *classes: str) -> VectorMap:
        return VectorMap(tuple(e for e in self.elements if e.cls in classes))

    def vertices(self) -> np.ndarray:
        if not self.elements:
            return np.zeros((0, 2))
        return np.concatenate([e.polyline for e in self.elements])


@dataclasses.dataclass(frozen=True, eq=False)
class Agent:
    agent_id: int
    half_extent: np.ndarray  # (half length, half width)
    history: np.ndarray  # T_h x 2
    future: np.ndarray  # T_f x 2

    @property
    def track(self) -> np.ndarray:
        return np.concatenate([self.history, self.future])

    @property
    def position(self) -> np.ndarray:
        """position at the prediction time"""
        return self.history[-1]


@dataclasses.dataclass(frozen=True)
class RoadGeometry:
    curvature: float
    lanes: int
    ego_lane: int
    lane_width: float = 3.5
    crosswalk: tuple[float, float] | None = None  # s interval

    @property
    def straight(self) -> bool:
        return abs(self.curvature) < 1e-6

    def lane_offsets(self) -> np.ndarray:
        return (np.arange(self.lanes) - self.ego_lane) * self.lane_width

    def divider_offsets(self) -> np.ndarray:
        return (np.arange(self.lanes - 1) + 0.5 - self.ego_lane) * self.lane_width

    def edges(self) -> tuple[float, float]:
        return (-self.ego_lane - 0.5) * self.lane_width, (self.lanes - self.ego_lane - 0.5) * self.lane_width

    def point(self, s, d) -> np.ndarray:
        """Frenet (s, d) -> (x, y)"""
        s, d = np.asarray(s, dtype=np.float64), np.asarray(d, dtype=np.float64)
        if self.straight:
            return np.stack(np.broadcast_arrays(d, s), axis=-1)
        k = self.curvature
        x = (1 - np.cos(k * s)) / k + d * np.cos(k * s)
        y = np.sin(k * s) / k - d * np.sin(k * s)
        return np.stack([x, y], axis=-1)

    def heading(self, s) -> np.ndarray:
        """lane heading as yaw from +y"""
        return -self.curvature * np.asarray(s, dtype=np.float64)

    def frenet(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) -> Frenet (s, d)"""
        p = np.asarray(points, dtype=np.float64)
        if self.straight:
            return p[..., 1], p[..., 0]
        k = self.curvature
        vx, vy = p[..., 0] - 1.0 / k, p[..., 1]
        rho = np.hypot(vx, vy)
        d = 1.0 / k - np.sign(k) * rho
        s = np.arctan2(k * vy, -k * vx) / k
        return s, d


@dataclasses.dataclass(frozen=True)
class SceneConfig:
    lanes: int = 3
    agents: int = 8
    curvature: tuple[float, float] = (-0.01, 0.01)
    hz: int = 10
    history_s: float = 2.0
    future_s: float = 3.0
    rendered_frames: int = 2
    image_rows: int = 64
    image_cols: int = 96
    n_cameras: int = 6
    lane_width: float = 3.5
    crosswalk_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.agents < 1:
            raise SceneConfigError(f"need at least one agent, got {self.agents}")
        if self.lanes < 1:
            raise SceneConfigError(f"need at least one lane, got {self.lanes}")
        if self.lanes * self.lane_width > PERCEPTION_RANGE.width:
            raise SceneConfigError(
                f"{self.lanes} lanes of {self.lane_width} m do not fit the {PERCEPTION_RANGE.width} m wide perception range"
            )
        lo, hi = self.curvature
        if lo > hi or max(abs(lo), abs(hi)) > 0.02:
            raise SceneConfigError(f"curvature range {self.curvature} must be ordered and within +-0.02 1/m")
        if self.hz < 1:
            raise SceneConfigError(f"frame rate must be at least 1 Hz, got {self.hz}")
        if not 1 <= self.rendered_frames <= self.t_h:
            raise SceneConfigError(f"rendered_frames {self.rendered_frames} must lie in [1, {self.t_h}]")
        if self.n_cameras < 1:
            raise SceneConfigError("need at least one camera")

    @property
    def t_h(self) -> int:
        return int(round(self.history_s * self.hz))

    @property
    def t_f(self) -> int:
        return int(round(self.future_s * self.hz))

    @property
    def frames(self) -> int:
        return self.t_h + self.t_f

    @property
    def current_frame(self) -> int:
        return self.t_h - 1

    def view_frames(self) -> list[int]:
        return list(range(self.t_h - self.rendered_frames, self.t_h))

    def rig(self) -> list[Camera]:
        return default_rig(self.n_cameras, self.image_rows, self.image_cols)


@dataclasses.dataclass(frozen=True, eq=False)
class Scene:
    seed: int
    config: SceneConfig
    road: RoadGeometry
    ego_poses: np.ndarray  # frames x 3
    agents: tuple[Agent, ...]
    gt_map: VectorMap
    views: dict[int, np.ndarray]  # frame -> cameras x rows x cols

    @property
    def hz(self) -> int:
        return self.config.hz

    @property
    def rig(self) -> list[Camera]:
        return self.config.rig()

    @property
    def current_frame(self) -> int:
        return self.config.current_frame

    def pose(self, frame: int) -> np.ndarray:
        if not 0 <= frame < len(self.ego_poses):
            raise IndexError(f"frame {frame} outside scene of {len(self.ego_poses)} frames")
        return self.ego_poses[frame]

    def agents_in_range(self, rng: PerceptionRange = PERCEPTION_RANGE) -> tuple[Agent, ...]:
        return tuple(a for a in self.agents if rng.contains(a.position)[0])


# ground-truth map


def _sampled_line(road: RoadGeometry, d: float, rng: PerceptionRange) -> list[np.ndarray]:
    reach = rng.height + rng.width
    s = np.arange(-reach, reach + MAP_STEP / 2, MAP_STEP)
    pts = road.point(s, np.full_like(s, d))
    return split_runs(pts, rng.contains(pts))


def build_map(road: RoadGeometry, rng: PerceptionRange = PERCEPTION_RANGE) -> VectorMap:
    elements: list[MapElement] = []
    for d in road.edges():
        elements += [MapElement("boundary", p) for p in _sampled_line(road, d, rng)]
    for d in road.divider_offsets():
        elements += [MapElement("divider", p) for p in _sampled_line(road, d, rng)]
    for d in road.lane_offsets():
        elements += [MapElement("centerline", p) for p in _sampled_line(road, d, rng)]
    if road.crosswalk is not None:
        s0, s1 = road.crosswalk
        left, right = road.edges()
        corners = road.point(np.array([s0, s0, s1, s1]), np.array([left, right, right, left]))
        if rng.contains(corners).all():
            elements.append(MapElement("crosswalk", np.concatenate([corners, corners[:1]])))
    return VectorMap(tuple(elements))


def resize_map(vmap: VectorMap, n: int) -> VectorMap:
    """Exactly n elements: drop from the end, or split the longest open element in two until there are enough"""
    if n < 1:
        raise SceneConfigError(f"map size must be positive, got {n}")
    elements = list(vmap.elements[:n])
    while len(elements) < n:
        open_ids = [i for i, e in enumerate(elements) if e.cls != "crosswalk"]
        if not open_ids:
            raise SceneConfigError("map has no open polylines to split")
        i = max(open_ids, key=lambda j: (len(elements[j].polyline), -j))
        e = elements[i]
        poly = e.polyline
        if len(poly) == 2:
            poly = np.stack([poly[0], (poly[0] + poly[1]) / 2, poly[1]])
        m = len(poly) // 2
        elements[i:i + 1] = [MapElement(e.cls, poly[:m + 1]), MapElement(e.cls, poly[m:])]
    return VectorMap(tuple(elements))


# agents


def _lane_follow(
    rand: np.random.Generator,
    road: RoadGeometry,
    cfg: SceneConfig,
    s_now: float,
    d_lane: float,
    v_max: float,
) -> np.ndarray:
    """Frenet trajectory over all frames: speed random walk around a constant acceleration, bounded lateral noise"""
    dt = 1.0 / cfg.hz
    accel = rand.uniform(-0.5, 0.5)
    v = np.empty(cfg.frames)
    v[0] = rand.uniform(3.0, v_max * 0.75)
    for t in range(1, cfg.frames):
        v[t] = np.clip(v[t - 1] + (accel + rand.normal(0.0, 0.3)) * dt, 0.0, v_max)
    s = np.concatenate([[0.0], np.cumsum(v[:-1] * dt)])
    s += s_now - s[cfg.current_frame]
    lateral = np.empty(cfg.frames)
    lateral[0] = rand.uniform(-0.2, 0.2)
    for t in range(1, cfg.frames):
        lateral[t] = np.clip(0.9 * lateral[t - 1] + rand.normal(0.0, 0.03), -LATERAL_NOISE, LATERAL_NOISE)
    return road.point(s, d_lane + lateral)


def generate_scene(seed: int, cfg: SceneConfig = SceneConfig(), rng: PerceptionRange = PERCEPTION_RANGE) -> Scene:
    """Pure function of (seed, cfg)"""
    from synthscene.render import render_views

    rand = np.random.default_rng(seed)
    curvature = float(rand.uniform(*cfg.curvature))
    ego_lane = int(rand.integers(cfg.lanes))
    crosswalk = None
    if rand.random() < cfg.crosswalk_prob:
        s0 = float(rand.uniform(-20.0, 16.0))
        crosswalk = (s0, s0 + 4.0)
    road = RoadGeometry(curvature, cfg.lanes, ego_lane, cfg.lane_width, crosswalk)

    # ego on its lane centre, at s = 0 for the prediction frame
    ego_speed = rand.uniform(5.0, 12.0)
    s_ego = (np.arange(cfg.frames) - cfg.current_frame) * ego_speed / cfg.hz
    ego_xy = road.point(s_ego, np.zeros_like(s_ego))
    ego_poses = np.column_stack([ego_xy, road.heading(s_ego)])

    # along-lane speed cap keeping the planar speed under MAX_SPEED on the inner side of a curve
    v_max = MAX_SPEED / (1.0 + abs(curvature) * rng.width + 0.1)
    agents: list[Agent] = []
    offsets = road.lane_offsets()
    for agent_id in range(cfg.agents):
        for _ in range(100):
            lane = int(rand.integers(cfg.lanes))
            s_now = float(rand.uniform(rng.y_min + 5.0, rng.y_max - 5.0))
            track = _lane_follow(rand, road, cfg, s_now, offsets[lane], v_max)
            if rng.contains(track[cfg.current_frame])[0]:
                break
        else:
            raise SceneConfigError(f"could not place agent {agent_id} inside the perception range")
        half_extent = np.array([rand.uniform(2.0, 2.6), rand.uniform(0.8, 1.0)])
        agents.append(Agent(agent_id, half_extent, track[: cfg.t_h], track[cfg.t_h:]))

    base = Scene(seed, cfg, road, ego_poses, tuple(agents), build_map(road, rng), {})
    views = {frame: render_views(base, frame) for frame in cfg.view_frames()}
    logger.debug("scene %d: curvature %.4f, %d map elements", seed, curvature, len(base.gt_map))
    return dataclasses.replace(base, views=views)


def generate_scenes(seeds: Sequence[int], cfg: SceneConfig = SceneConfig()) -> list[Scene]:
    return [generate_scene(seed, cfg) for seed in seeds]
