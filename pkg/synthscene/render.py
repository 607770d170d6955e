from __future__ import annotations


import numpy as np

from synthscene.camera import ground_hits
from synthscene.geometry import to_world
from synthscene.scene import Scene

"""
Single-channel semantic shading of the ground plane, per camera.
"""

SHADE: dict[str, float] = {
    "sky": 0.0,
    "off_road": 0.1,
    "driveable": 0.5,
    "divider": 0.7,
    "crosswalk": 0.8,
    "agent": 0.9,
    "boundary": 1.0,
}

BOUNDARY_BAND = 0.3
DIVIDER_BAND = 0.1


def shade_ground(scene: Scene, frame: int, points: np.ndarray) -> np.ndarray:
    """Texture value of world-frame ground points at a given frame"""
    road = scene.road
    s, d = road.frenet(points)
    left, right = road.edges()
    out = np.full(len(points), SHADE["off_road"])
    on_road = (d >= left) & (d <= right)
    out[on_road] = SHADE["driveable"]
    if road.crosswalk is not None:
        s0, s1 = road.crosswalk
        out[on_road & (s >= s0) & (s <= s1)] = SHADE["crosswalk"]
    for off in road.divider_offsets():
        out[np.abs(d - off) < DIVIDER_BAND] = SHADE["divider"]
    for edge in (left, right):
        out[np.abs(d - edge) < BOUNDARY_BAND] = SHADE["boundary"]
    for agent in scene.agents:
        a_s, a_d = road.frenet(agent.track[frame])
        hl, hw = agent.half_extent
        out[(np.abs(s - a_s) <= hl) & (np.abs(d - a_d) <= hw)] = SHADE["agent"]
    return out


def render_views(scene: Scene, frame: int) -> np.ndarray:
    """(cameras, rows, cols) float32 images of the ground seen from the ego pose at `frame`"""
    pose = scene.pose(frame)
    rig = scene.rig
    images = np.zeros((len(rig), rig[0].rows, rig[0].cols), dtype=np.float32)
    for k, cam in enumerate(rig):
        ground, hit = ground_hits(cam)
        values = np.full(len(ground), SHADE["sky"])
        values[hit] = shade_ground(scene, frame, to_world(ground[hit], pose))
        images[k] = values.reshape(cam.rows, cam.cols)
    return images
